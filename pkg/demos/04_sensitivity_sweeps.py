"""Budget, coalescence-width, and marker-format sensitivity at desk scale.

Trains one small checkpoint, then sweeps one axis at a time while holding
everything else fixed.  The marker sweep keeps the selected spans frozen and
swaps only the boundary strings, isolating tag syntax from selection
quality.
"""

from hilite import (
    BUILTIN_FORMATS,
    OracleSolver,
    OracleSolverConfig,
    TrainConfig,
    evaluate,
    gen_dataset,
    train,
)

data = gen_dataset(30, target_tokens=400, seed=7,
                   n_clusters=3, cluster_size=4, filler_gap=3)
cfg = TrainConfig(steps=300, seed=1)
solver = OracleSolver(OracleSolverConfig(coverage_threshold=0.8))
result = train(data, solver, cfg)

# =============================================================================
# Highlight budget
# =============================================================================

print("budget sweep (gamma):")
for gamma in (0.10, 0.15, 0.25, 0.30):
    sweep_cfg = TrainConfig.from_dict({**cfg.to_dict(), "gamma": gamma})
    report = evaluate(data, result.params, solver, sweep_cfg, result.idf_table)
    print(f"  gamma={gamma:.2f}  reward={report['mean_reward']:.3f}  "
          f"fraction={report['mean_highlight_fraction']:.3f}")

# =============================================================================
# Coalescence width
# =============================================================================

print("\nwidth sweep (delta):")
for delta in (4, 6, 8, 10, 12, 14, 16):
    sweep_cfg = TrainConfig.from_dict({**cfg.to_dict(), "delta": delta})
    report = evaluate(data, result.params, solver, sweep_cfg, result.idf_table)
    print(f"  delta={delta:2d}  reward={report['mean_reward']:.3f}")

# =============================================================================
# Marker format (selections frozen, only tag strings swapped)
# =============================================================================

print("\nmarker sweep:")
for name in sorted(BUILTIN_FORMATS):
    fmt_cfg = TrainConfig.from_dict({**cfg.to_dict(), "marker_format": name})
    fmt_solver = OracleSolver(OracleSolverConfig(0.8), BUILTIN_FORMATS[name])
    report = evaluate(data, result.params, fmt_solver, fmt_cfg, result.idf_table)
    print(f"  {name:16s} reward={report['mean_reward']:.3f}")
# the oracle reads coverage, not tag text, so every row should agree
