"""Build a motion-driven adjacency and push node features through the graph.

Shows how the activation map shapes the edge weights: the moving patch's row
carries large weights, so its content dominates message passing.
"""

import numpy as np

from psot import (
    ParameterStore,
    Tensor,
    build_motion_adjacency,
    build_vanilla_adjacency,
)
from psot.graphs import propagate, stack_audio_visual_nodes

rng = np.random.default_rng(0)
n2, d = 4, 6
v = rng.normal(size=(n2, d))
v /= np.linalg.norm(v, axis=-1, keepdims=True)
a = rng.normal(size=d)
a /= np.linalg.norm(a)

# patch 2 "moves": its motion intensity dwarfs the others
m = np.array([0.05, 0.05, 1.8, 0.05])

adj_driven = build_motion_adjacency(Tensor(v), Tensor(a), Tensor(m))
adj_vanilla = build_vanilla_adjacency(Tensor(v), Tensor(a))
print("motion-driven adjacency (patch rows scaled by their motion):")
print(adj_driven.data.round(2))
print("\nvanilla adjacency (plain feature similarity):")
print(adj_vanilla.data.round(2))

store = ParameterStore(seed=1)
weights = [store.add_uniform(f"w{i}", (d, d), 1 / np.sqrt(d)) for i in range(3)]
nodes = stack_audio_visual_nodes(Tensor(v), Tensor(a))

out_driven = propagate(adj_driven, nodes, weights)
out_vanilla = propagate(adj_vanilla, nodes, weights)
print("\nnode norms after 3 layers, driven vs vanilla (last row is audio):")
for i, (x, y) in enumerate(zip(out_driven.data, out_vanilla.data)):
    tag = "audio " if i == n2 else f"patch{i}"
    print(f"  {tag}: {np.linalg.norm(x):8.4f}  vs  {np.linalg.norm(y):8.4f}")
print("\nthe moving patch keeps its signal alive; the rest decay.")
