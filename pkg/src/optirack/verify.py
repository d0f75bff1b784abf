"""Independent chunk-ledger oracle for allreduce schedules.

The ledger tracks, for every (rank, chunk) cell, the set of original ranks
whose contribution has been folded into that cell. Replaying a schedule is
pure bookkeeping: a Reduce unions the sender's set into the receiver's, a
Copy replaces the receiver's set with the sender's. A schedule implements
allreduce exactly when every cell ends up with the full rank set. The replay
knows nothing about how schedules are generated, which is what makes it a
usable oracle: deleting any single transfer from a minimal schedule flips
the verdict.

Sets are stored as integer bitmasks (bit g = rank g contributed) so even
256-rank ledgers stay small and fast.
"""

from dataclasses import dataclass

from .collectives import Combine, Schedule
from .errors import MalformedTransfer


@dataclass
class ChunkLedger:
    nranks: int
    num_chunks: int
    masks: list[list[int]]  # masks[rank][chunk] = contributor bitmask

    def contributors(self, rank: int, chunk: int) -> frozenset[int]:
        mask = self.masks[rank][chunk]
        return frozenset(g for g in range(self.nranks) if mask >> g & 1)


def new_ledger(nranks: int, num_chunks: int) -> ChunkLedger:
    """Fresh ledger: every rank holds only its own contribution everywhere."""
    return ChunkLedger(
        nranks=nranks,
        num_chunks=num_chunks,
        masks=[[1 << g] * num_chunks for g in range(nranks)],
    )


def simulate_chunks(schedule: Schedule,
                    require_copy_superset: bool = False) -> ChunkLedger:
    """Replay a schedule round by round and return the final ledger.

    Rounds are bulk-synchronous: every transfer reads the sender's state as
    it was when the round began. With ``require_copy_superset`` the replay
    additionally asserts that a Copy never loses information relative to
    what the receiver already had, which holds for every generated schedule.
    """
    n, nchunks = schedule.nranks, schedule.num_chunks
    sizes = schedule.chunk_sizes
    ledger = new_ledger(n, nchunks)
    masks = ledger.masks
    for round_idx, rnd in enumerate(schedule.rounds):
        reduces: list[tuple[int, int, int]] = []
        copies: list[tuple[int, int, int]] = []
        for t in rnd.transfers:
            if not (0 <= t.src < n and 0 <= t.dst < n):
                raise MalformedTransfer(
                    f"round {round_idx}: ranks {t.src}->{t.dst} outside [0, {n})")
            if any(c < 0 or c >= nchunks for c in t.chunks):
                raise MalformedTransfer(
                    f"round {round_idx}: chunk index outside [0, {nchunks})")
            if t.nbytes != sum(sizes[c] for c in t.chunks):
                raise MalformedTransfer(
                    f"round {round_idx}: {t.src}->{t.dst} carries {t.nbytes} "
                    f"bytes but its chunks total {sum(sizes[c] for c in t.chunks)}")
            bucket = reduces if t.combine is Combine.REDUCE else copies
            for chunk in t.chunks:
                bucket.append((t.dst, chunk, masks[t.src][chunk]))
        if require_copy_superset:
            for dst, chunk, incoming in copies:
                held = masks[dst][chunk]
                if held & ~incoming:
                    raise MalformedTransfer(
                        f"round {round_idx}: copy into rank {dst} chunk {chunk} "
                        f"would drop contributions")
        for dst, chunk, incoming in reduces:
            masks[dst][chunk] |= incoming
        overwrite: dict[tuple[int, int], int] = {}
        for dst, chunk, incoming in copies:
            key = (dst, chunk)
            overwrite[key] = overwrite.get(key, 0) | incoming
        for (dst, chunk), incoming in overwrite.items():
            masks[dst][chunk] = incoming
    return ledger


def check_allreduce(ledger: ChunkLedger, nranks: int | None = None) -> bool:
    """True iff every (rank, chunk) cell holds every rank's contribution."""
    n = ledger.nranks if nranks is None else nranks
    full = (1 << n) - 1
    return all(mask == full for row in ledger.masks for mask in row)


def first_deficiency(
    ledger: ChunkLedger,
) -> tuple[int, int, frozenset[int]] | None:
    """First (rank, chunk, missing contributors) cell, or None if complete."""
    full = (1 << ledger.nranks) - 1
    for rank, row in enumerate(ledger.masks):
        for chunk, mask in enumerate(row):
            if mask != full:
                missing = full & ~mask
                return rank, chunk, frozenset(
                    g for g in range(ledger.nranks) if missing >> g & 1)
    return None
