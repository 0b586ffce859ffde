"""Run the distributed iteration and watch it converge to the centralized
solution while nodes only ever exchange compressed batches.

Three things are worth seeing:
  1. the normalized error against the centralized optimum falling,
  2. the transport audit proving nobody shipped more than Q rows per
     iteration and stream,
  3. the fully-connected fast path agreeing bit for bit with the general
     tree-based path on a complete graph.
"""

import numpy as np

from dasf import (
    MmseProblem,
    SignalModel,
    TroProblem,
    audit_transport,
    dasf_run,
    make_fully_connected,
    make_random_tree,
    sample_stationary,
    solve_centralized,
)

K = 8
graph = make_random_tree(K, 3, rng_seed=5)
m = graph.total_channels
rng = np.random.default_rng(11)

model = SignalModel(
    channels=graph.channels,
    source_var=0.5,
    noise_var=0.2,
    mix_y=rng.standard_normal((m, 3)),
    mix_v=rng.standard_normal((m, 5)),
)
batch = sample_stationary(model, 0, 3000, rng_seed=11)

problem = TroProblem(n_filters=2)
reference = solve_centralized(problem, batch).x

result = dasf_run(problem, graph, batch, n_iterations=120, mode="ti",
                  rng_seed=1, reference=reference)

print(f"= power-ratio filters on a {K}-node random tree, M={m}, Q=2 =")
print("iter  node  objective      epsilon")
for rec in result.records:
    if rec.iteration % 20 == 0 or rec.iteration == len(result.records) - 1:
        print(f"{rec.iteration:4d}  {rec.node:4d}  {rec.objective:+.8f}  {rec.epsilon:.3e}")

# the audit recounts every logged transmission against the row cap
audit = audit_transport(result.transport, problem.n_filters)
print()
print(f"transport audit ok={audit.ok}")
print(f"  compressed signal records: {audit.signal_records}")
print(f"  mixing matrix records:     {audit.mix_records}")
print(f"  deterministic-term records:{audit.det_records}")
print(f"  raw fallback records:      {audit.raw_records}")
print(f"  total scalars shipped:     {result.transport.scalars()}")
raw_scalars = m * batch.n_samples * K
print(f"  vs centralizing every batch at every node: {120 * raw_scalars} scalars")

# same problem, complete graph: the dedicated fully-connected variant and
# the tree-based variant must produce identical trajectories
full = make_fully_connected(K, 3)
mmse = MmseProblem(n_filters=3)   # one filter per target row
a = dasf_run(mmse, full, batch, 16, mode="fc", rng_seed=2)
b = dasf_run(mmse, full, batch, 16, mode="ti", rng_seed=2)
same = all(np.array_equal(x, y) for x, y in zip(a.x_history, b.x_history))
print()
print("fully-connected vs tree engine on a complete graph, bit-identical:", same)

# convergence is measured with a symmetry-aware error: the power-ratio
# solution set is closed under right-orthogonal transforms, so the reference
# is aligned to the final iterate before the error trace is computed
final_eps = result.records[-1].epsilon
gap_raw = np.linalg.norm(result.final_x - reference) / np.linalg.norm(reference)
print()
print(f"final epsilon (aligned): {final_eps:.3e}")
print(f"raw distance, unaligned: {gap_raw:.3e}  (can stay large, the orbit is flat)")
