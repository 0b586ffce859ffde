"""Distributed iteration engine: fuse, solve locally, disseminate.

One iteration of the scheme, at updating node q:

1. prune the network to a spanning tree rooted at q (or use the star of a
   fully connected network directly),
2. every other node compresses its signal block through its current filter
   block and forwards the sum along the tree toward q; nodes whose subtree
   carries fewer channels than the filter width forward raw rows instead,
3. q assembles a compressed instance of the same problem family and
   solves it,
4. the solution is split into q's new block plus one square mixing block per
   branch (or direct new blocks for raw branches) and sent back down, and
   every node updates its block by multiplying with its branch's mix.

The local-to-network change of coordinates is a tall sparse matrix C with
one nonzero block per block row; its identities (local signals equal C^T
times the network signals, the network filter equals C times the local one)
are the backbone of the tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import NetworkGraph, PrunedTree, prune_to_tree
from .sfo import (
    CompressedInstance,
    SfoProblem,
    SolveOutcome,
    align_to_anchor,
    check_constraint_bound,
    constraint_residuals,
    evaluate_objective,
    solve_instance,
)
from .signals import SampleBatch

__all__ = [
    "select_updating_node",
    "star_tree",
    "compress",
    "compress_det",
    "compress_gamma",
    "BranchSegment",
    "LocalLayout",
    "plan_local_layout",
    "build_transition_matrix",
    "build_anchor",
    "fuse_and_forward",
    "assemble_local_instance",
    "distribute_update",
    "dasf_step",
    "dasf_run",
    "StepInfo",
    "RunResult",
    "ConvergenceRecord",
    "CSV_HEADER",
    "write_records_csv",
    "TransportRecord",
    "TransportLog",
    "TransportAudit",
    "audit_transport",
    "normalized_error",
    "align_reference",
]


def compress(x_block: np.ndarray, y_block: np.ndarray) -> np.ndarray:
    """Filter a node's signal block through its compressor: X_k^T Y_k,
    n_filters rows regardless of the node's channel count."""
    return x_block.T @ y_block


def compress_det(x_block: np.ndarray, b_block: np.ndarray) -> np.ndarray:
    """Compress a deterministic term's block the same way as a signal."""
    return x_block.T @ b_block


def compress_gamma(x_block: np.ndarray, gamma_block: np.ndarray) -> np.ndarray:
    """Compress one block of a quadratic-form matrix: X_k^T Gamma_k X_k."""
    return x_block.T @ gamma_block @ x_block


def select_updating_node(iteration: int, node_count: int) -> int:
    """Round-robin schedule over 1-based node ids: iteration i updates
    node (i mod K) + 1."""
    if node_count < 1:
        raise ValueError("node_count must be positive")
    return iteration % node_count + 1


def star_tree(graph: NetworkGraph, root: int) -> PrunedTree:
    """The depth-one tree of a fully connected network, built without pruning."""
    others = tuple(k for k in graph.nodes if k != root)
    return PrunedTree(
        root=root,
        parent={k: root for k in others},
        order=(root,) + others,
        branch_of={k: k for k in others},
        _children={root: others},
    )


# --------------------------------------------------------------------------
# transport accounting


@dataclass(frozen=True)
class TransportRecord:
    """One point-to-point transmission over a tree edge."""

    iteration: int
    sender: int
    receiver: int
    stream: str   # "y" or "v" for signal batches, "mix" for update dissemination
    kind: str     # "compressed", "raw", "mix_block", "new_block"
    rows: int
    cols: int

    @property
    def scalars(self) -> int:
        return self.rows * self.cols


class TransportLog:
    """Append-only record of every transmission, queryable by facet."""

    def __init__(self):
        self.records: list[TransportRecord] = []

    def add(self, record: TransportRecord) -> None:
        self.records.append(record)

    def sent(self, iteration=None, sender=None, stream=None, kind=None) -> list[TransportRecord]:
        out = self.records
        if iteration is not None:
            out = [r for r in out if r.iteration == iteration]
        if sender is not None:
            out = [r for r in out if r.sender == sender]
        if stream is not None:
            out = [r for r in out if r.stream == stream]
        if kind is not None:
            out = [r for r in out if r.kind == kind]
        return list(out)

    def scalars(self, iteration=None) -> int:
        return sum(r.scalars for r in self.sent(iteration=iteration))

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class TransportAudit:
    """Outcome of checking a log against the compression contract."""

    ok: bool
    issues: tuple[str, ...]
    signal_records: int
    raw_records: int
    mix_records: int
    det_records: int = 0


def audit_transport(log: TransportLog, n_filters: int) -> TransportAudit:
    """Check that no node ever shipped more than the compression allows.

    Per iteration, per sender, per signal stream, the transmitted channel
    count must not exceed the filter width; raw (uncompressed) sends are
    only legal below it.
    """
    issues: list[str] = []
    per_sender: dict[tuple[int, int, str], int] = {}
    n_signal = n_raw = n_mix = n_det = 0
    for rec in log.records:
        if rec.stream in ("y", "v"):
            n_signal += 1
            key = (rec.iteration, rec.sender, rec.stream)
            per_sender[key] = per_sender.get(key, 0) + rec.rows
            if rec.kind == "raw":
                n_raw += 1
                if rec.rows >= n_filters:
                    issues.append(
                        f"iteration {rec.iteration}: node {rec.sender} sent "
                        f"{rec.rows} raw channels, expected fewer than {n_filters}"
                    )
        elif rec.stream.startswith("det:"):
            n_det += 1
        else:
            n_mix += 1
    for (iteration, sender, stream), rows in sorted(per_sender.items()):
        if rows > n_filters:
            issues.append(
                f"iteration {iteration}: node {sender} sent {rows} channels "
                f"of stream '{stream}', cap is {n_filters}"
            )
    return TransportAudit(
        ok=not issues,
        issues=tuple(issues),
        signal_records=n_signal,
        raw_records=n_raw,
        mix_records=n_mix,
        det_records=n_det,
    )


# --------------------------------------------------------------------------
# local problem layout


@dataclass(frozen=True)
class BranchSegment:
    """One branch of the pruned tree, as seen from the updating node.

    A compressed branch occupies n_filters local coordinates; a raw branch
    (subtree channel count below the filter width) occupies one coordinate
    per channel, ordered by the preorder member list.
    """

    root: int
    members: tuple[int, ...]   # preorder, branch root first
    raw: bool
    width: int                 # columns this branch occupies in C
    offset: int                # first column of the branch segment


@dataclass(frozen=True)
class LocalLayout:
    """Coordinate plan for the compressed problem at one updating node."""

    node: int                                 # updating node q
    n_filters: int
    own_channels: int                         # q's block, always columns [0, own)
    branches: tuple[BranchSegment, ...]       # ascending branch-root order
    local_dim: int
    fallback: frozenset[int]                  # nodes forwarding raw rows
    subtree_channels: dict[int, int] = field(repr=False)
    raw_stack: dict[int, tuple[int, ...]] = field(repr=False)  # preorder per fallback node

    def segment(self, branch_root: int) -> BranchSegment:
        for seg in self.branches:
            if seg.root == branch_root:
                return seg
        raise KeyError(f"no branch rooted at {branch_root}")


def plan_local_layout(tree: PrunedTree, graph: NetworkGraph, n_filters: int) -> LocalLayout:
    """Decide per-node compression and the local coordinate order.

    A node compresses when its subtree (itself included) carries at least
    n_filters channels; otherwise it forwards its raw rows, stacked with its
    children's raw rows in preorder. A compressed node therefore never has a
    compressed descendant below a raw one.
    """
    q = tree.root
    if graph.total_channels < n_filters:
        raise ValueError("filter width exceeds the network's channel count")

    subtree: dict[int, int] = {}
    for k in reversed(tree.order):
        subtree[k] = graph.channel_count(k) + sum(subtree[c] for c in tree.children(k))
    fallback = frozenset(k for k in tree.order if k != q and subtree[k] < n_filters)

    raw_stack: dict[int, tuple[int, ...]] = {}
    for k in reversed(tree.order):
        if k in fallback:
            stack: list[int] = [k]
            for c in tree.children(k):
                stack.extend(raw_stack[c])
            raw_stack[k] = tuple(stack)

    own = graph.channel_count(q)
    offset = own
    branches: list[BranchSegment] = []
    for n in tree.branch_roots():
        raw = n in fallback
        width = subtree[n] if raw else n_filters
        branches.append(BranchSegment(
            root=n,
            members=tree.branch(n),
            raw=raw,
            width=width,
            offset=offset,
        ))
        offset += width

    return LocalLayout(
        node=q,
        n_filters=n_filters,
        own_channels=own,
        branches=tuple(branches),
        local_dim=offset,
        fallback=fallback,
        subtree_channels=subtree,
        raw_stack=raw_stack,
    )


def build_transition_matrix(graph: NetworkGraph, layout: LocalLayout,
                            x: np.ndarray) -> np.ndarray:
    """The (total_channels, local_dim) map C from local to network coordinates.

    Block column 0 holds the identity at the updating node's rows. Each
    compressed branch column holds the members' current filter blocks at
    their rows; each raw branch column holds per-member identities. Every
    block row of C has exactly one nonzero block.
    """
    c = np.zeros((graph.total_channels, layout.local_dim))
    c[graph.block_slice(layout.node), :layout.own_channels] = np.eye(layout.own_channels)
    for seg in layout.branches:
        if seg.raw:
            off = seg.offset
            for k in seg.members:
                mk = graph.channel_count(k)
                c[graph.block_slice(k), off:off + mk] = np.eye(mk)
                off += mk
        else:
            cols = slice(seg.offset, seg.offset + seg.width)
            for k in seg.members:
                c[graph.block_slice(k), cols] = x[graph.block_slice(k)]
    return c


def build_anchor(graph: NetworkGraph, layout: LocalLayout, x: np.ndarray) -> np.ndarray:
    """Local point mapping back to the current network filter: C @ anchor = x.

    Identity mixing blocks for compressed branches, the members' current
    blocks for raw branches, q's current block on top.
    """
    q_rows = x[graph.block_slice(layout.node)]
    parts = [q_rows]
    eye = np.eye(layout.n_filters)
    for seg in layout.branches:
        if seg.raw:
            parts.append(np.vstack([x[graph.block_slice(k)] for k in seg.members]))
        else:
            parts.append(eye)
    return np.vstack(parts)


# --------------------------------------------------------------------------
# fusion (leaf-to-root signal flow)


def _log(log: TransportLog | None, **kwargs) -> None:
    if log is not None:
        log.add(TransportRecord(**kwargs))


def fuse_and_forward(graph: NetworkGraph, tree: PrunedTree, layout: LocalLayout,
                     x: np.ndarray, data: np.ndarray, stream: str,
                     iteration: int = 0, log: TransportLog | None = None) -> np.ndarray:
    """Simulate the leaf-to-root flow of one signal stream, returning the
    local (local_dim, n_samples) batch the updating node assembles.

    Compressing nodes send their filtered block plus everything already
    fused below them; raw nodes send their channel rows unchanged. Raw rows
    are absorbed into the first compressing ancestor by filtering with the
    senders' current blocks, which equals summing the senders' own
    compressed contributions.
    """
    q = tree.root
    messages: dict[int, np.ndarray] = {}
    for k in reversed(tree.order):
        if k == q:
            continue
        if k in layout.fallback:
            stacks = [data[graph.block_slice(k)]]
            stacks += [messages[c] for c in tree.children(k)]
            payload = stacks[0] if len(stacks) == 1 else np.vstack(stacks)
            kind = "raw"
        else:
            payload = compress(x[graph.block_slice(k)], data[graph.block_slice(k)])
            for c in tree.children(k):
                if c in layout.fallback:
                    x_rows = np.vstack([x[graph.block_slice(j)] for j in layout.raw_stack[c]])
                    payload = payload + compress(x_rows, messages[c])
                else:
                    payload = payload + messages[c]
            kind = "compressed"
        messages[k] = payload
        _log(log, iteration=iteration, sender=k, receiver=tree.parent[k],
             stream=stream, kind=kind, rows=payload.shape[0], cols=payload.shape[1])

    segments = [data[graph.block_slice(q)]]
    segments += [messages[seg.root] for seg in layout.branches]
    return np.vstack(segments)


def assemble_local_instance(problem: SfoProblem, graph: NetworkGraph, tree: PrunedTree,
                            layout: LocalLayout, x: np.ndarray, batch: SampleBatch,
                            iteration: int = 0,
                            log: TransportLog | None = None) -> tuple[CompressedInstance, np.ndarray]:
    """Build the compressed instance the updating node solves, plus the
    transition matrix C it implies.

    Signal streams and deterministic term matrices all flow through the
    simulated tree (terms under stream names "det:<name>", exempt from the
    signal channel cap but counted as transmitted scalars); the constraint
    metric is C^T C, whose per-branch blocks are what the nodes' quadratic
    compressions sum to.
    """
    c = build_transition_matrix(graph, layout, x)
    y_local = fuse_and_forward(graph, tree, layout, x, batch.y, "y", iteration, log)
    v_local = None
    if problem.uses_second_stream:
        if batch.v is None:
            raise ValueError("problem needs a second stream but the batch has none")
        v_local = fuse_and_forward(graph, tree, layout, x, batch.v, "v", iteration, log)
    terms = {
        name: fuse_and_forward(graph, tree, layout, x, b, f"det:{name}", iteration, log)
        for name, b in problem.b_term_matrices().items()
    }
    instance = CompressedInstance(
        problem=problem,
        y=y_local,
        v=v_local,
        s=batch.s if problem.uses_target else None,
        b_terms=terms,
        metric=c.T @ c,
        anchor=build_anchor(graph, layout, x),
    )
    return instance, c


# --------------------------------------------------------------------------
# dissemination (root-to-leaf update flow)


def distribute_update(graph: NetworkGraph, tree: PrunedTree, layout: LocalLayout,
                      x: np.ndarray, x_local: np.ndarray, iteration: int = 0,
                      log: TransportLog | None = None) -> np.ndarray:
    """Apply the local solution network-wide: q keeps its rows, compressed
    branches right-multiply their blocks by the branch mixing block, raw
    branches receive their new rows directly. Equals C @ x_local."""
    x_next = np.array(x)
    x_next[graph.block_slice(layout.node)] = x_local[:layout.own_channels]
    for seg in layout.branches:
        block = x_local[seg.offset:seg.offset + seg.width]
        if seg.raw:
            off = 0
            for k in seg.members:
                mk = graph.channel_count(k)
                x_next[graph.block_slice(k)] = block[off:off + mk]
                off += mk
            # the root ships each subtree its stacked new rows
            for k in seg.members:
                _log(log, iteration=iteration, sender=tree.parent[k], receiver=k,
                     stream="mix", kind="new_block",
                     rows=layout.subtree_channels[k], cols=layout.n_filters)
        else:
            mix = block
            for k in seg.members:
                x_next[graph.block_slice(k)] = x[graph.block_slice(k)] @ mix
                _log(log, iteration=iteration, sender=tree.parent[k], receiver=k,
                     stream="mix", kind="mix_block",
                     rows=layout.n_filters, cols=layout.n_filters)
    return x_next


# --------------------------------------------------------------------------
# one iteration, full runs


@dataclass
class StepInfo:
    """Everything one iteration produced, for inspection and tests."""

    node: int
    tree: PrunedTree
    layout: LocalLayout
    transition: np.ndarray
    instance: CompressedInstance
    outcome: SolveOutcome
    x_local: np.ndarray


def dasf_step(problem: SfoProblem, graph: NetworkGraph, x: np.ndarray,
              batch: SampleBatch, iteration: int, mode: str = "ti",
              prune_seed=None, log: TransportLog | None = None) -> tuple[np.ndarray, StepInfo]:
    """Run one iteration at the scheduled updating node and return the next
    network-wide filter along with the step's internals.

    mode "ti" prunes the (arbitrary connected) topology to a tree each
    iteration; mode "fc" requires a fully connected network and uses its
    star directly. On a fully connected network both modes take the exact
    same code path.
    """
    q = select_updating_node(iteration, graph.node_count)
    if mode == "fc":
        if not graph.is_complete():
            raise ValueError("mode 'fc' requires a fully connected network")
        tree = star_tree(graph, q)
    elif mode == "ti":
        tree = prune_to_tree_cached(graph, q, prune_seed)
    else:
        raise ValueError(f"unknown mode '{mode}'")

    layout = plan_local_layout(tree, graph, problem.n_filters)
    instance, c = assemble_local_instance(
        problem, graph, tree, layout, x, batch, iteration, log)
    outcome = solve_instance(instance)
    x_local = align_to_anchor(outcome.x, instance.anchor, problem.symmetry)
    x_next = distribute_update(graph, tree, layout, x, x_local, iteration, log)
    info = StepInfo(
        node=q,
        tree=tree,
        layout=layout,
        transition=c,
        instance=instance,
        outcome=outcome,
        x_local=x_local,
    )
    return x_next, info


_TREE_CACHE: dict[tuple[bytes, tuple[int, ...], int], PrunedTree] = {}


def prune_to_tree_cached(graph: NetworkGraph, root: int, rng_seed=None) -> PrunedTree:
    """Deterministic pruning reuses the same tree for the same root; cache it
    keyed on the graph's content so long runs do not re-flood every iteration.
    Keying on object identity would be unsound: a recycled id would hand a
    stale tree to a different graph."""
    if rng_seed is not None:
        return prune_to_tree(graph, root, rng_seed)
    key = (graph.adjacency.tobytes(), graph.channels, root)
    tree = _TREE_CACHE.get(key)
    if tree is None:
        tree = prune_to_tree(graph, root)
        if len(_TREE_CACHE) > 4096:
            _TREE_CACHE.clear()
        _TREE_CACHE[key] = tree
    return tree


@dataclass(frozen=True)
class ConvergenceRecord:
    """One row of a run's convergence table."""

    run: int
    iteration: int
    node: int
    objective: float
    epsilon: float
    max_residual: float
    tx_samples: int


CSV_HEADER = "run,iter,q,objective,epsilon,max_residual,tx_samples"


def write_records_csv(records: Sequence[ConvergenceRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for r in records:
            writer.writerow([
                r.run, r.iteration, r.node,
                repr(r.objective), repr(r.epsilon), repr(r.max_residual),
                r.tx_samples,
            ])


def normalized_error(x: np.ndarray, reference: np.ndarray) -> float:
    """Squared distance to the reference, relative to the reference's energy."""
    denom = float(np.sum(reference * reference))
    if denom == 0.0:
        raise ValueError("reference filter is zero")
    diff = x - reference
    return float(np.sum(diff * diff)) / denom


def align_reference(reference: np.ndarray, final_x: np.ndarray, symmetry: str) -> np.ndarray:
    """Map the reference through the problem's solution symmetry so it sits
    closest to the trajectory's final point; distances to one fixed
    representative are then meaningful along the whole trajectory."""
    return align_to_anchor(reference, final_x, symmetry)


@dataclass
class RunResult:
    """A full run: per-iteration table, filter trajectory, transmissions."""

    records: list[ConvergenceRecord]
    x_history: tuple[np.ndarray, ...]   # length n_iterations + 1, initial first
    transport: TransportLog
    reference: np.ndarray | None

    @property
    def final_x(self) -> np.ndarray:
        return self.x_history[-1]

    def epsilon_trace(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.records])

    def objective_trace(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def residual_trace(self) -> np.ndarray:
        return np.array([r.max_residual for r in self.records])

    def to_csv(self, path) -> None:
        write_records_csv(self.records, path)


def dasf_run(problem: SfoProblem, graph: NetworkGraph, batch, n_iterations: int,
             mode: str = "ti", x0: np.ndarray | None = None, rng_seed=None,
             reference=None, run_index: int = 0, prune_seed=None,
             warn_on_bound: bool = True, early_stop_window: int | None = None,
             early_stop_rtol: float = 1e-2) -> RunResult:
    """Run the scheme for a fixed number of iterations.

    batch is either one SampleBatch reused every iteration (deterministic
    batch mode) or a callable mapping the iteration index to a fresh batch
    (adaptive mode). reference is an optional network-wide solution to
    measure against: a fixed array is symmetry-aligned once to the final
    iterate, a callable is evaluated per iteration and used as-is. x0
    defaults to a random point satisfying the network-wide constraints.

    early_stop_window, off by default, ends the run once the best progress
    metric of the last window iterations is no longer early_stop_rtol better
    than the best seen before the window (the plateau test runs on the
    unaligned error when a reference exists, else on the relative state
    movement).
    """
    if warn_on_bound:
        check_constraint_bound(problem, graph)
    rng = np.random.default_rng(rng_seed)
    if x0 is None:
        x0 = problem.random_feasible(graph.total_channels, rng)
    x = np.asarray(x0, dtype=float)
    if x.shape != (graph.total_channels, problem.n_filters):
        raise ValueError("x0 shape must be (total_channels, n_filters)")

    log = TransportLog()
    history = [x]
    rows: list[tuple[int, int, float, float, int]] = []
    progress: list[float] = []
    for i in range(n_iterations):
        batch_i = batch(i) if callable(batch) else batch
        x_prev = x
        x, info = dasf_step(problem, graph, x, batch_i, i, mode=mode,
                            prune_seed=prune_seed, log=log)
        history.append(x)
        objective = evaluate_objective(problem, x, batch_i)
        residuals = constraint_residuals(problem, x)
        max_residual = float(residuals.max()) if residuals.size else 0.0
        rows.append((i, info.node, objective, max_residual, log.scalars(iteration=i)))
        if early_stop_window is not None:
            if callable(reference):
                progress.append(normalized_error(x, reference(i)))
            elif reference is not None:
                progress.append(normalized_error(x, np.asarray(reference, dtype=float)))
            else:
                progress.append(normalized_error(x, x_prev))
            w = early_stop_window
            if len(progress) >= 2 * w:
                recent = min(progress[-w:])
                earlier = min(progress[:-w])
                if recent >= earlier * (1.0 - early_stop_rtol):
                    break

    ref_fixed = None
    if reference is not None and not callable(reference):
        ref_fixed = align_reference(np.asarray(reference, dtype=float),
                                    history[-1], problem.symmetry)

    records = []
    for idx, (i, node, objective, max_residual, tx) in enumerate(rows):
        if ref_fixed is not None:
            eps = normalized_error(history[idx + 1], ref_fixed)
        elif callable(reference):
            eps = normalized_error(history[idx + 1], reference(i))
        else:
            eps = np.nan
        records.append(ConvergenceRecord(
            run=run_index, iteration=i, node=node, objective=objective,
            epsilon=eps, max_residual=max_residual, tx_samples=tx,
        ))

    return RunResult(
        records=records,
        x_history=tuple(history),
        transport=log,
        reference=ref_fixed,
    )
