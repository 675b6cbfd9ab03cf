"""Per-link busy time over one hyperperiod.

Schedulers keep one :class:`LinkBusy` per link and ask it where a periodic
window may go.  Touching intervals are merged so a blocked candidate can jump
straight past a whole busy run.
"""
from __future__ import annotations

from bisect import bisect_right

import numpy as np


def ceil_to_grid(t: int, step: int, origin: int = 0) -> int:
    """Smallest point of the grid ``origin + i * step`` that is >= t."""
    return origin - (-(t - origin) // step) * step


class LinkBusy:
    def __init__(self, horizon: int):
        self.horizon = horizon
        self.starts: list[int] = []
        self.ends: list[int] = []
        # Unmerged copy for vectorized queries, synced lazily by arrays().
        self._raw = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        self._pending: list[tuple[int, int]] = []

    def __len__(self):
        return len(self.starts)

    def add(self, start: int, end: int) -> None:
        if end <= start:
            return
        i = bisect_right(self.starts, start)
        if i > 0 and self.ends[i - 1] > start or i < len(self.starts) and self.starts[i] < end:
            raise ValueError(f"[{start}, {end}) overlaps committed traffic")
        self._pending.append((start, end))
        merge_left = i > 0 and self.ends[i - 1] == start
        merge_right = i < len(self.starts) and self.starts[i] == end
        if merge_left and merge_right:
            self.ends[i - 1] = self.ends[i]
            del self.starts[i], self.ends[i]
        elif merge_left:
            self.ends[i - 1] = end
        elif merge_right:
            self.starts[i] = start
        else:
            self.starts.insert(i, start)
            self.ends.insert(i, end)

    def add_periodic(self, offset: int, pattern, period: int) -> None:
        """Reserve every instance; instance k lasts ``pattern[k % len(pattern)]``."""
        m = len(pattern)
        for k in range(self.horizon // period):
            self.add(k * period + offset, k * period + offset + pattern[k % m])

    def blocking_end(self, start: int, end: int) -> int | None:
        """End of the busy run intersecting [start, end), or None if free."""
        i = bisect_right(self.starts, start) - 1
        if i >= 0 and self.ends[i] > start:
            return self.ends[i]
        if i + 1 < len(self.starts) and self.starts[i + 1] < end:
            return self.ends[i + 1]
        return None

    def periodic_block(self, offset: int, pattern, period: int) -> int | None:
        """Smallest offset past the first busy run hit by any instance.

        Returns None when every instance is free.
        """
        m = len(pattern)
        for k, base in enumerate(range(0, self.horizon, period)):
            end = self.blocking_end(base + offset, base + offset + pattern[k % m])
            if end is not None:
                return end - base
        return None

    def is_free(self, offset: int, pattern, period: int) -> bool:
        return self.periodic_block(offset, pattern, period) is None

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Every reserved interval as sorted (starts, ends) int64 arrays.

        Touching intervals are not merged here.
        """
        if self._pending:
            new = np.array(sorted(self._pending), dtype=np.int64)
            starts, ends = self._raw
            at = np.searchsorted(starts, new[:, 0])
            self._raw = (np.insert(starts, at, new[:, 0]), np.insert(ends, at, new[:, 1]))
            self._pending.clear()
        return self._raw


class Occupancy:
    """Busy intervals of every link, all sharing one horizon."""

    def __init__(self, horizon: int):
        self.horizon = horizon
        self.links: dict[str, LinkBusy] = {}

    def __getitem__(self, link_id: str) -> LinkBusy:
        busy = self.links.get(link_id)
        if busy is None:
            busy = self.links[link_id] = LinkBusy(self.horizon)
        return busy

    def commit(self, hops, offsets, period: int) -> None:
        for hop, offset in zip(hops, offsets):
            self[hop.link].add_periodic(offset, hop.pattern, period)
