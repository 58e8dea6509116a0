#!/usr/bin/env python3
"""Life-value dynamics: rewards, penalties, selection, elimination, refresh.

Simulates an uneven workload over a small agent pool and prints how
life values steer probabilistic selection and how the pool archives
and revives members.  Run directly: python3 demos/03_population_dynamics.py
"""

import random

from flowsmith import corpus as cp
from flowsmith.agents import (
    Outcome,
    build_agents,
    eliminate_and_refresh,
    select,
    selection_probabilities,
    update_life,
)

profile = cp.CorpusProfile(total=6, node_histogram={1: 1.0}, depth_histogram={0: 1.0},
                           tool_vocab_size=8)
records = cp.generate(profile, seed=3)
net = build_agents([(r.goal, r.workflow) for r in records])
config = net.config

print(f"initial lives: {[a.life for a in net.active]} (L_init={config.l_init})")

print("\n== outcomes move life inside [0, L_max] ==")
agent = net.active[0]
update_life(agent, Outcome(r_correct=1), config)
print(f"after one verified success: {agent.life} (alpha1={config.alphas[0]})")
update_life(agent, Outcome(r_correct=1, r_reuse=1, r_general=1), config)
print(f"after success + reuse + generalization: {agent.life}")
for _ in range(5):
    update_life(agent, Outcome(p_fail=1), config)
print(f"after five failures (clamped at zero): {agent.life}")

print("\n== selection probability is proportional to life x compatibility ==")
a, b = net.active[1], net.active[2]
a.life, b.life = 10.0, 30.0
candidates = [(a, 1.0), (b, 1.0)]
print(f"closed form: {selection_probabilities(candidates)}")
rng = random.Random(7)
draws = 50000
hits = sum(1 for _ in range(draws) if select(candidates, rng) is a)
print(f"empirical over {draws} draws: {hits / draws:.3f} for the life-10 agent")

dead = net.active[3]
dead.life = 0.0
print(f"zero-life agent mass: {selection_probabilities([(dead, 1.0), (b, 1.0)])[0]}")

print("\n== elimination and refresh ==")
print(f"before: active={len(net.active)} archive={len(net.archive)} epoch={net.epoch}")
log = eliminate_and_refresh(net)
print(f"archived: {log.archived}, revived: {log.revived}, spawned: {log.spawned}")
print(f"after: active={len(net.active)} archive={len(net.archive)} epoch={net.epoch}")
print("every training goal is covered again:",
      all(any(agent.goal.id == goal.id for agent in net.active)
          for goal, _ in net.training))
