"""Time-interleaved uniform undersampling schedules.

Frame t of an R-fold schedule samples the PE lines {k : k == (t + offset0)
mod R}, so any R consecutive frames jointly tile the full PE grid. A
retrospective schedule derived from an acquisition keeps, per frame, the
sub-lattice at the higher rate plus the acquired line nearest the k-space
center row (ties resolve to the lower index), mirroring how prospective
low-rate data gets re-undersampled for training.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SamplingSchedule", "make_schedule", "retro_undersample"]


@dataclass(frozen=True)
class SamplingSchedule:
    """Per-frame PE line sets for a time-interleaved acquisition.

    center_line is the global target row n_pe // 2; use frame_center_line(t)
    for the per-frame sampled line nearest to it (the retained line, for
    retro-derived schedules).
    """

    n_pe: int
    R: int
    T: int
    lines: tuple
    center_line: int
    offset0: int = 0
    retained_center: tuple = field(default=None)

    def frame_lines(self, t):
        return np.asarray(self.lines[t], dtype=np.int64)

    def frame_center_line(self, t):
        """Sampled line of frame t nearest the center row, ties to lower index."""
        if self.retained_center is not None:
            return self.retained_center[t]
        lines = np.asarray(self.lines[t])
        return int(lines[np.argmin(np.abs(lines - self.center_line))])

    def frame_offset(self, t):
        """Lattice offset of frame t's uniform component."""
        return (t + self.offset0) % self.R


def _nearest_line(lines, target):
    # np.argmin takes the first minimum, which is the lower index on a tie
    lines = np.asarray(lines)
    return int(lines[np.argmin(np.abs(lines - target))])


def make_schedule(n_pe, R, T, offset0=0):
    """Build a time-interleaved schedule with R-fold uniform undersampling."""
    if R < 1 or n_pe % R != 0:
        raise ValueError(f"R={R} must be >= 1 and divide n_pe={n_pe}")
    if not 0 <= offset0 < R:
        raise ValueError(f"offset0={offset0} must lie in [0, R)")
    if T < 1:
        raise ValueError("T must be >= 1")
    lines = tuple(tuple(range((t + offset0) % R, n_pe, R)) for t in range(T))
    return SamplingSchedule(n_pe=n_pe, R=R, T=T, lines=lines, center_line=n_pe // 2, offset0=offset0)


def retro_undersample(sched, R_new):
    """Derive a higher-rate schedule by subsetting each frame's acquired lines.

    Keeps the R_new sub-lattice consistent with the frame's shift pattern plus
    the acquired line nearest the center row. The result's line sets are
    always subsets of the input's.
    """
    if R_new % sched.R != 0 or R_new <= sched.R:
        raise ValueError(f"R_new={R_new} must be a proper multiple of R={sched.R}")
    if sched.retained_center is not None:
        raise ValueError("schedule is already retro-derived")
    new_lines = []
    retained = []
    for t in range(sched.T):
        acquired = np.asarray(sched.lines[t], dtype=np.int64)
        o_new = (t + sched.offset0) % R_new
        keep = acquired[acquired % R_new == o_new]
        center = _nearest_line(acquired, sched.center_line)
        retained.append(center)
        merged = np.union1d(keep, [center])
        new_lines.append(tuple(int(k) for k in merged))
    return SamplingSchedule(
        n_pe=sched.n_pe,
        R=R_new,
        T=sched.T,
        lines=tuple(new_lines),
        center_line=sched.center_line,
        offset0=sched.offset0,
        retained_center=tuple(retained),
    )
