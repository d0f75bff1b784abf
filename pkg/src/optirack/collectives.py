"""Bulk-synchronous allreduce schedule generators.

A schedule is a list of rounds; within a round every listed transfer happens
concurrently and the round ends when the slowest rank finishes. Payloads are
split into equal chunks (remainder on the last chunk) and every transfer
names the chunk indices it carries, so schedules can be checked end to end by
the chunk ledger in verify.

Generators:
  ring            classic reduce-scatter + all-gather around a ring
  tree            two complementary binary trees, each carrying half the
                  payload, reduce-to-root then broadcast, pipelined
  radix-k         recursive halving/doubling generalized to base-k digit
                  groups; each round exchanges with k-1 peers at once
  dnc             greedy divide-and-conquer halving for arbitrary rank
                  counts; odd groups fold their unmatched rank first
"""

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

from .errors import NotAPowerOfRadix, SizeMismatch, UnsupportedAlgorithm
from .topology import GpuId, log_radix


class Combine(Enum):
    REDUCE = "reduce"
    COPY = "copy"


@dataclass(frozen=True)
class Transfer:
    """One directed point-to-point send within a round."""

    src: int
    dst: int
    nbytes: int
    chunks: frozenset[int]
    combine: Combine


@dataclass(frozen=True)
class Round:
    transfers: tuple[Transfer, ...]

    @cached_property
    def required_circuits(self) -> frozenset[tuple[int, int]]:
        """The (src, dst) rank pairs that must hold circuits this round."""
        return frozenset((t.src, t.dst) for t in self.transfers)


@dataclass(frozen=True)
class Schedule:
    algorithm: str
    nranks: int
    payload_bytes: int
    num_chunks: int
    rounds: tuple[Round, ...]

    @property
    def chunk_sizes(self) -> list[int]:
        return chunk_sizes(self.payload_bytes, self.num_chunks)


def chunk_sizes(payload_bytes: int, num_chunks: int) -> list[int]:
    """Equal split of the payload; the remainder rides on the last chunk."""
    if num_chunks < 1:
        raise ValueError("num_chunks must be >= 1")
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    base = payload_bytes // num_chunks
    sizes = [base] * num_chunks
    sizes[-1] += payload_bytes - base * num_chunks
    return sizes


def _check_args(nranks: int, payload_bytes: int) -> None:
    if nranks < 1:
        raise ValueError(f"nranks must be >= 1, got {nranks}")
    if payload_bytes < 0:
        raise ValueError(f"payload_bytes must be >= 0, got {payload_bytes}")


def _sum_bytes(sizes: list[int], chunks: frozenset[int]) -> int:
    return sum(sizes[c] for c in chunks)


def gen_ring(nranks: int, payload_bytes: int) -> Schedule:
    """Ring allreduce: 2(P-1) rounds, each rank forwarding one chunk.

    Reduce-scatter rounds walk partial sums around the ring until rank i
    owns the fully reduced chunk (i+1) mod P; all-gather rounds walk the
    finished chunks the rest of the way. Every round uses the same circuit
    set {i -> i+1 mod P}, so a circuit-switched fabric configures once.
    """
    _check_args(nranks, payload_bytes)
    n = nranks
    sizes = chunk_sizes(payload_bytes, n)
    rounds: list[Round] = []
    if n > 1:
        for r in range(n - 1):
            rounds.append(Round(tuple(
                Transfer(i, (i + 1) % n, sizes[(i - r) % n],
                         frozenset({(i - r) % n}), Combine.REDUCE)
                for i in range(n)
            )))
        for r in range(n - 1):
            rounds.append(Round(tuple(
                Transfer(i, (i + 1) % n, sizes[(i + 1 - r) % n],
                         frozenset({(i + 1 - r) % n}), Combine.COPY)
                for i in range(n)
            )))
    return Schedule("ring", n, payload_bytes, n, tuple(rounds))


def _heap_depth(position: int) -> int:
    return (position + 1).bit_length() - 1


def gen_tree(nranks: int, payload_bytes: int, pipeline_chunks: int = 1) -> Schedule:
    """Double binary tree allreduce.

    Two heap-shaped trees cover all ranks; the second is the first with rank
    labels rotated by ceil(P/2), which keeps any rank's depths in the two
    trees distinct for power-of-two P. Each tree reduces its half of the
    payload to its root, then broadcasts it back down, pipelined over
    ``pipeline_chunks`` chunks per tree. Round count is
    2 * (floor(log2 P) + pipeline_chunks - 1).
    """
    _check_args(nranks, payload_bytes)
    if pipeline_chunks < 1:
        raise ValueError(f"pipeline_chunks must be >= 1, got {pipeline_chunks}")
    n, c = nranks, pipeline_chunks
    sizes = chunk_sizes(payload_bytes, 2 * c)
    if n == 1:
        return Schedule("tree", n, payload_bytes, 2 * c, ())
    shift = (n + 1) // 2
    height = n.bit_length() - 1
    parents: list[list[int | None]] = []
    depths: list[list[int]] = []
    for offset in (0, shift):
        parent_row: list[int | None] = []
        depth_row: list[int] = []
        for u in range(n):
            pos = (u - offset) % n
            depth_row.append(_heap_depth(pos))
            if pos == 0:
                parent_row.append(None)
            else:
                parent_row.append(((pos - 1) // 2 + offset) % n)
        parents.append(parent_row)
        depths.append(depth_row)

    phase_len = height + c - 1
    reduce_rounds: list[list[Transfer]] = [[] for _ in range(phase_len)]
    bcast_rounds: list[list[Transfer]] = [[] for _ in range(phase_len)]
    for tree in (0, 1):
        for u in range(n):
            parent = parents[tree][u]
            if parent is None:
                continue
            depth = depths[tree][u]
            for j in range(c):
                chunk = tree * c + j
                reduce_rounds[(height - depth) + j].append(Transfer(
                    u, parent, sizes[chunk], frozenset({chunk}), Combine.REDUCE))
                bcast_rounds[(depth - 1) + j].append(Transfer(
                    parent, u, sizes[chunk], frozenset({chunk}), Combine.COPY))
    rounds = tuple(Round(tuple(ts)) for ts in reduce_rounds + bcast_rounds)
    return Schedule("tree", n, payload_bytes, 2 * c, rounds)


def gen_recursive_radix(nranks: int, payload_bytes: int, radix: int) -> Schedule:
    """Recursive halving/doubling generalized to base-k digit groups.

    Requires P to be an exact power of the radix. Reduce-scatter round t
    works on digit position p = m-1-t: each rank splits its working set into
    k parts by that digit of the chunk index, keeps its own part, and sends
    each other part to the peer whose rank matches it at that digit. The
    all-gather mirrors the process low digit first. Per-rank traffic totals
    2M(P-1)/P and there are 2*log_k(P) rounds with fanout k-1.
    """
    _check_args(nranks, payload_bytes)
    if radix < 2:
        raise ValueError(f"radix must be >= 2, got {radix}")
    m = log_radix(nranks, radix)
    if m is None:
        raise NotAPowerOfRadix(f"nranks {nranks} is not a power of {radix}")
    n, k = nranks, radix
    sizes = chunk_sizes(payload_bytes, n)
    rounds: list[Round] = []
    for t in range(m):
        p = m - 1 - t
        block = k**p
        transfers = []
        for i in range(n):
            own_digit = (i // block) % k
            prefix = (i // (block * k)) * (block * k)
            for v in range(k):
                if v == own_digit:
                    continue
                peer = i + (v - own_digit) * block
                chunks = frozenset(range(prefix + v * block, prefix + (v + 1) * block))
                transfers.append(Transfer(
                    i, peer, _sum_bytes(sizes, chunks), chunks, Combine.REDUCE))
        rounds.append(Round(tuple(transfers)))
    for p in range(m):
        block = k**p
        transfers = []
        for i in range(n):
            own_digit = (i // block) % k
            held = frozenset(range((i // block) * block, (i // block) * block + block))
            nbytes = _sum_bytes(sizes, held)
            for v in range(k):
                if v == own_digit:
                    continue
                peer = i + (v - own_digit) * block
                transfers.append(Transfer(i, peer, nbytes, held, Combine.COPY))
        rounds.append(Round(tuple(transfers)))
    return Schedule(f"radix-{k}", n, payload_bytes, n, tuple(rounds))


def gen_dnc(nranks: int, payload_bytes: int) -> Schedule:
    """Greedy divide-and-conquer allreduce for arbitrary rank counts.

    Each level splits every group into a ceil/floor pair of halves. When the
    halves are unequal, the larger half's last rank first folds its whole
    working set into the half's first rank (one extra reduce round) and sits
    out until the mirrored gather hands it the finished result. Matched
    ranks then exchange complementary halves of the chunk range, and the
    halves recurse. Both halves always end up the same size, so sibling
    groups stay round-aligned. On power-of-two P this reproduces radix-2
    transfer for transfer.
    """
    _check_args(nranks, payload_bytes)
    n = nranks
    sizes = chunk_sizes(payload_bytes, n)
    groups: list[tuple[list[int], list[int]]] = [(list(range(n)), list(range(n)))]
    rs_rounds: list[list[Transfer]] = []
    while len(groups[0][0]) > 1:
        fold_round: list[Transfer] = []
        exchange_round: list[Transfer] = []
        next_groups: list[tuple[list[int], list[int]]] = []
        for ranks, chunks in groups:
            upper = ranks[: (len(ranks) + 1) // 2]
            lower = ranks[(len(ranks) + 1) // 2:]
            if len(upper) > len(lower):
                unmatched = upper.pop()
                all_chunks = frozenset(chunks)
                fold_round.append(Transfer(
                    unmatched, upper[0], _sum_bytes(sizes, all_chunks),
                    all_chunks, Combine.REDUCE))
            split = (len(chunks) + 1) // 2
            chunks_a, chunks_b = chunks[:split], chunks[split:]
            set_a, set_b = frozenset(chunks_a), frozenset(chunks_b)
            bytes_a, bytes_b = _sum_bytes(sizes, set_a), _sum_bytes(sizes, set_b)
            for x, y in zip(upper, lower):
                exchange_round.append(Transfer(x, y, bytes_b, set_b, Combine.REDUCE))
                exchange_round.append(Transfer(y, x, bytes_a, set_a, Combine.REDUCE))
            next_groups.append((upper, chunks_a))
            next_groups.append((lower, chunks_b))
        if fold_round:
            rs_rounds.append(fold_round)
        rs_rounds.append(exchange_round)
        groups = next_groups
    ag_rounds = [
        [Transfer(t.dst, t.src, t.nbytes, t.chunks, Combine.COPY) for t in transfers]
        for transfers in reversed(rs_rounds)
    ]
    rounds = tuple(Round(tuple(ts)) for ts in rs_rounds + ag_rounds)
    return Schedule("dnc", n, payload_bytes, n, tuple(rounds))


def generate(algorithm: str, nranks: int, payload_bytes: int,
             pipeline_chunks: int = 1) -> Schedule:
    """Dispatch on an algorithm name: ring, tree, dnc, or radix-<k>."""
    if algorithm == "ring":
        return gen_ring(nranks, payload_bytes)
    if algorithm == "tree":
        return gen_tree(nranks, payload_bytes, pipeline_chunks)
    if algorithm == "dnc":
        return gen_dnc(nranks, payload_bytes)
    if algorithm.startswith("radix-"):
        try:
            radix = int(algorithm.split("-", 1)[1])
        except ValueError:
            raise UnsupportedAlgorithm(f"bad radix in {algorithm!r}") from None
        return gen_recursive_radix(nranks, payload_bytes, radix)
    raise UnsupportedAlgorithm(f"unknown algorithm {algorithm!r}")


def sent_bytes_per_rank(schedule: Schedule) -> list[int]:
    """Total bytes each rank transmits over the whole schedule."""
    totals = [0] * schedule.nranks
    for rnd in schedule.rounds:
        for t in rnd.transfers:
            totals[t.src] += t.nbytes
    return totals


def circuit_demand(schedule: Schedule,
                   gpus: list[GpuId]) -> list[dict[tuple[int, int], int]]:
    """Per-round cross-server circuit counts, keyed by unordered server pair.

    Rank i runs on gpus[i]. Circuits are directed, so a duplex exchange
    between servers counts twice against the pair's fiber pool.
    """
    if len(gpus) != schedule.nranks:
        raise SizeMismatch(
            f"schedule has {schedule.nranks} ranks but {len(gpus)} GPUs given")
    demand: list[dict[tuple[int, int], int]] = []
    for rnd in schedule.rounds:
        counts: dict[tuple[int, int], int] = {}
        for t in rnd.transfers:
            src, dst = gpus[t.src], gpus[t.dst]
            if src.server != dst.server:
                pair = (min(src.server, dst.server), max(src.server, dst.server))
                counts[pair] = counts.get(pair, 0) + 1
        demand.append(counts)
    return demand


def max_circuit_demand(schedule: Schedule,
                       gpus: list[GpuId]) -> dict[tuple[int, int], int]:
    """Worst per-round circuit count for every server pair the schedule touches."""
    worst: dict[tuple[int, int], int] = {}
    for counts in circuit_demand(schedule, gpus):
        for pair, count in counts.items():
            worst[pair] = max(worst.get(pair, 0), count)
    return worst


def format_schedule(schedule: Schedule) -> str:
    """Deterministic round-major text form, for golden-file comparisons."""
    lines = [
        f"{schedule.algorithm} nranks={schedule.nranks} "
        f"payload={schedule.payload_bytes} chunks={schedule.num_chunks}"
    ]
    for idx, rnd in enumerate(schedule.rounds):
        lines.append(f"round {idx}:")
        for t in sorted(rnd.transfers, key=lambda t: (t.src, t.dst)):
            chunk_list = ",".join(str(c) for c in sorted(t.chunks))
            lines.append(
                f"  {t.src}->{t.dst} {t.combine.value} "
                f"bytes={t.nbytes} chunks=[{chunk_list}]")
    return "\n".join(lines) + "\n"
