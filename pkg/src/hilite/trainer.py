"""Grouped policy-gradient training against a frozen solver.

One training step on one instance:

1. score all context tokens, giving the Bernoulli policy p;
2. sample G preliminary masks, project each to the budget
   k = floor(gamma * |omega|) (largest p first), coalesce with gap delta,
   inject markers, and query the solver with the emphasized text;
3. normalize the G rewards into advantages A_j = (r_j - mean) / (std + eps)
   using the population standard deviation (all-equal rewards give all-zero
   advantages);
4. minimize  L = L_PG + lambda_len * L_LEN + beta_ent * L_ENT  where

       L_PG  = -(1/G) sum_j A_j log pi(prelim mask_j)
       L_LEN = (mean_omega p_i - gamma)^2
       L_ENT = -(mean Bernoulli entropy over omega)

   with one AdamW step (decoupled weight decay on the weight vector) over
   the analytic gradient.  Log-probabilities are always evaluated on the
   pre-projection masks; the projected mask only shapes the emphasized text.

The solver is frozen: training mutates scorer parameters and optimizer
state, nothing else.  Rollouts within a group may run concurrently; the
parameter update is single-writer.  Every run is reproducible from
(config, seed): sampling streams derive from (seed, instance id, group
index, step).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import markup, policy
from .data import Instance, evidence_overlap
from .errors import (
    ConfigError,
    HiliteError,
    IntegrityError,
    ParseError,
    ProtocolError,
    SolverUnavailableError,
)
from .markup import MarkerFormat, get_format
from .policy import ScorerParams, TokenFeatures, build_idf_table, featurize, score
from .rewards import RewardSpec, composite
from .selection import Budget, SamplerKind, rng_stream, sample_mask, topk
from .solver import SolverOutput, parse_output
from .tokenization import TokenizedContext, tokenize

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters for grouped policy-gradient training."""

    group_size: int = 4
    gamma: float = 0.15
    delta: int = 10
    lambda_len: float = 0.01
    beta_ent: float = 1.0
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    steps: int = 1000
    seed: int = 0
    sampler: SamplerKind = SamplerKind.BERNOULLI_PROJECT
    marker_format: str = "default"
    tau: float = 1.0
    idf_ceiling: float = 6.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    advantage_eps: float = 1e-8
    solver_failure_budget: int = 10
    eval_threshold: float = 0.5
    prune_joiner: str = " ... "

    def __post_init__(self):
        if self.group_size < 2:
            raise ConfigError("group_size must be >= 2 (advantages need variance)")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        for name in ("lambda_len", "beta_ent", "learning_rate", "weight_decay"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        self.sampler = SamplerKind(self.sampler)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sampler"] = self.sampler.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def config_hash(cfg: TrainConfig) -> str:
    return hashlib.sha256(
        json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    ).hexdigest()


@dataclass
class GroupSample:
    """Everything produced by one instance's G rollouts."""

    prelim_masks: list[np.ndarray]
    proj_masks: list[np.ndarray]
    emphasized: list[str]
    outputs: list[SolverOutput | None]
    rewards: np.ndarray
    advantages: np.ndarray
    log_probs: np.ndarray


@dataclass
class OptimizerState:
    """AdamW moment accumulators for (w, b)."""

    m_w: np.ndarray
    v_w: np.ndarray
    m_b: float = 0.0
    v_b: float = 0.0
    step: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "OptimizerState":
        return cls(m_w=np.zeros(dim), v_w=np.zeros(dim))

    def to_dict(self) -> dict:
        return {
            "m_w": self.m_w.tolist(),
            "v_w": self.v_w.tolist(),
            "m_b": self.m_b,
            "v_b": self.v_b,
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerState":
        return cls(
            m_w=np.asarray(d["m_w"], dtype=np.float64),
            v_w=np.asarray(d["v_w"], dtype=np.float64),
            m_b=float(d["m_b"]),
            v_b=float(d["v_b"]),
            step=int(d["step"]),
        )


def advantages(rewards, epsilon: float = 1e-8) -> np.ndarray:
    """Group-normalized advantages with population standard deviation.

    All-equal rewards give exactly zero advantages (0 / (0 + eps)).
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ConfigError("advantage normalization needs a group of >= 2")
    if np.all(r == r[0]):  # exact zeros, not fp residue of mean subtraction
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + epsilon)


@dataclass
class LossTerms:
    l_pg: float
    l_len: float
    l_ent: float
    total: float


def loss_terms(
    group: GroupSample,
    scores: policy.ScoreMap,
    omega,
    cfg: TrainConfig,
) -> LossTerms:
    """Evaluate the three loss components and their weighted sum."""
    l_pg = float(-(group.advantages * group.log_probs).mean())
    idx = np.asarray(tuple(omega), dtype=np.int64)
    mean_p = float(scores.probs[idx].mean()) if idx.size else cfg.gamma
    l_len = float((mean_p - cfg.gamma) ** 2)
    l_ent = float(-policy.entropy(scores, omega))
    total = l_pg + cfg.lambda_len * l_len + cfg.beta_ent * l_ent
    return LossTerms(l_pg=l_pg, l_len=l_len, l_ent=l_ent, total=total)


def assemble_gradient(
    group: GroupSample,
    feats: TokenFeatures,
    params: ScorerParams,
    omega,
    cfg: TrainConfig,
) -> tuple[np.ndarray, float]:
    """Analytic gradient of the total loss with respect to (w, b).

    Matches central finite differences of loss_terms' total (masks and
    advantages held fixed); clamped tokens contribute zero everywhere, like
    the clamped forward pass they correspond to.
    """
    idx = np.asarray(tuple(omega), dtype=np.int64)
    if idx.size == 0:
        return np.zeros(params.dim), 0.0
    x = policy.standardize(feats, params)[idx]
    z = (x @ params.w + params.b) / params.tau
    p_raw = 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))
    interior = (p_raw > policy.PROB_CLAMP) & (p_raw < 1.0 - policy.PROB_CLAMP)
    p = np.clip(p_raw, policy.PROB_CLAMP, 1.0 - policy.PROB_CLAMP)
    dp_dz = np.where(interior, p * (1.0 - p), 0.0)
    n = idx.size
    g = len(group.prelim_masks)

    # policy-gradient term: -(1/G) sum_j A_j * (m_j - p) / tau
    diff_sum = np.zeros(n)
    for j in range(g):
        m = np.asarray(group.prelim_masks[j], dtype=np.float64)[idx]
        diff_sum += group.advantages[j] * np.where(interior, m - p, 0.0)
    dz_pg = -diff_sum / (g * params.tau)

    # length term: 2 (mean p - gamma) * dp/dz / (n tau)
    dz_len = 2.0 * (p.mean() - cfg.gamma) * dp_dz / (n * params.tau)

    # entropy bonus: d(-H)/dz = -ln((1-p)/p) * dp/dz / (n tau)
    dz_ent = -np.log((1.0 - p) / p) * dp_dz / (n * params.tau)

    dz = dz_pg + cfg.lambda_len * dz_len + cfg.beta_ent * dz_ent
    grad_w = dz @ x
    grad_b = float(dz.sum())
    return grad_w, grad_b


def grad_step(
    group: GroupSample,
    feats: TokenFeatures,
    params: ScorerParams,
    opt: OptimizerState,
    cfg: TrainConfig,
    omega,
) -> ScorerParams:
    """One AdamW update on (w, b).  Decoupled weight decay applies to the
    weight vector only.  Non-finite gradients skip the step (logged)."""
    grad_w, grad_b = assemble_gradient(group, feats, params, omega, cfg)
    if not (np.all(np.isfinite(grad_w)) and math.isfinite(grad_b)):
        log.warning("non-finite gradient at optimizer step %d; skipped", opt.step + 1)
        return params
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    opt.step += 1
    t = opt.step
    opt.m_w = b1 * opt.m_w + (1 - b1) * grad_w
    opt.v_w = b2 * opt.v_w + (1 - b2) * grad_w**2
    opt.m_b = b1 * opt.m_b + (1 - b1) * grad_b
    opt.v_b = b2 * opt.v_b + (1 - b2) * grad_b**2
    m_w_hat = opt.m_w / (1 - b1**t)
    v_w_hat = opt.v_w / (1 - b2**t)
    m_b_hat = opt.m_b / (1 - b1**t)
    v_b_hat = opt.v_b / (1 - b2**t)
    lr = cfg.learning_rate
    params.w = params.w - lr * m_w_hat / (np.sqrt(v_w_hat) + eps) - lr * cfg.weight_decay * params.w
    params.b = float(params.b - lr * m_b_hat / (math.sqrt(v_b_hat) + eps))
    return params


# ---------------------------------------------------------------------------
# End-to-end training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: ScorerParams
    opt: OptimizerState
    idf_table: dict[str, float]
    history: list[dict]
    checkpoint_path: Path | None = None
    metrics_path: Path | None = None
    aborted: bool = False
    reward_regressions: list[int] = field(default_factory=list)


def _prepare(dataset: list[Instance], cfg: TrainConfig):
    contexts = {inst.id: tokenize(inst.context) for inst in dataset}
    idf_table = build_idf_table(list(contexts.values()))
    feats = {
        inst.id: featurize(inst.query, contexts[inst.id], idf_table, cfg.idf_ceiling)
        for inst in dataset
    }
    return contexts, idf_table, feats


def init_from_dataset(
    dataset: list[Instance], cfg: TrainConfig
) -> tuple[ScorerParams, dict[str, float], dict, dict]:
    """Featurize the training split and freeze initialization state.

    Standardization statistics come from the stacked training features; the
    bias starts at tau * logit(gamma) so the initial expected highlight
    fraction sits on budget.
    """
    contexts, idf_table, feats = _prepare(dataset, cfg)
    stacked = np.vstack([f.matrix for f in feats.values()])
    if stacked.shape[0] == 0:
        raise ConfigError("training split contains no tokens")
    params = policy.init_params(stacked, tau=cfg.tau, init_prob=cfg.gamma)
    return params, idf_table, contexts, feats


def rollout_group(
    inst: Instance,
    ctx: TokenizedContext,
    scores: policy.ScoreMap,
    solver,
    cfg: TrainConfig,
    fmt: MarkerFormat,
    reward_spec: RewardSpec,
    step: int,
) -> tuple[GroupSample, int]:
    """Sample G masks, query the solver concurrently, and assemble the group.

    Returns the group plus the number of transport failures (each one is a
    zero-reward, flagged episode).
    """
    budget = Budget.for_omega(cfg.gamma, len(ctx.omega))
    prelim_masks, proj_masks, emphasized = [], [], []
    for j in range(cfg.group_size):
        rng = rng_stream(cfg.seed, inst.id, j, step)
        prelim, proj = sample_mask(scores, ctx.omega, budget.k, cfg.sampler, rng)
        spans = markup.coalesce(proj, ctx, cfg.delta)
        prelim_masks.append(prelim)
        proj_masks.append(proj)
        emphasized.append(markup.inject(ctx, spans, fmt))

    outputs: list[SolverOutput | None] = [None] * cfg.group_size
    failures = 0

    def call(j: int) -> SolverOutput:
        return solver.solve(inst.query, emphasized[j], inst)

    with ThreadPoolExecutor(max_workers=cfg.group_size) as pool:
        futures = {j: pool.submit(call, j) for j in range(cfg.group_size)}
        for j, fut in futures.items():
            try:
                outputs[j] = fut.result()
            except (SolverUnavailableError, ProtocolError):
                # transport exhaustion and off-contract payloads are both
                # flagged zero-reward episodes, never training crashes
                failures += 1
                outputs[j] = None

    contract = getattr(solver, "output_contract", "free-text")
    rewards = np.zeros(cfg.group_size)
    for j, out in enumerate(outputs):
        if out is None:
            continue
        try:
            out.parsed = parse_output(out.raw_text, contract)
        except ParseError:
            out.flagged = True
            continue
        rewards[j] = composite(out.parsed, inst.gold, reward_spec)

    adv = advantages(rewards, cfg.advantage_eps)
    log_probs = np.array(
        [policy.log_prob(m, scores, ctx.omega) for m in prelim_masks]
    )
    group = GroupSample(
        prelim_masks=prelim_masks,
        proj_masks=proj_masks,
        emphasized=emphasized,
        outputs=outputs,
        rewards=rewards,
        advantages=adv,
        log_probs=log_probs,
    )
    return group, failures


def train(
    dataset: list[Instance],
    solver,
    cfg: TrainConfig,
    reward_spec: RewardSpec | None = None,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Algorithm: cycle the dataset with batch size 1, one grouped update
    per step.  Writes a metrics log and a final checkpoint when ``out_dir``
    is given; aborts with a partial checkpoint once transport failures
    exceed the failure budget."""
    if not dataset:
        raise ConfigError("training dataset is empty")
    reward_spec = reward_spec or RewardSpec((("em", 1.0),))
    fmt = get_format(cfg.marker_format)
    params, idf_table, contexts, feats = init_from_dataset(dataset, cfg)
    opt = OptimizerState.zeros(params.dim)

    out_dir = Path(out_dir) if out_dir is not None else None
    metrics_path = None
    metrics_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.jsonl"
        metrics_fh = metrics_path.open("w", encoding="utf-8")

    history: list[dict] = []
    total_failures = 0
    aborted = False
    reward_regressions: list[int] = []
    window_means: list[float] = []
    try:
        for step in range(cfg.steps):
            inst = dataset[step % len(dataset)]
            ctx = contexts[inst.id]
            f = feats[inst.id]
            scores = score(f, params)
            group, failures = rollout_group(
                inst, ctx, scores, solver, cfg, fmt, reward_spec, step
            )
            total_failures += failures
            terms = loss_terms(group, scores, ctx.omega, cfg)
            params = grad_step(group, f, params, opt, cfg, ctx.omega)
            idx = np.asarray(ctx.omega, dtype=np.int64)
            record = {
                "step": step,
                "rewards": group.rewards.tolist(),
                "L_PG": terms.l_pg,
                "L_LEN": terms.l_len,
                "L_ENT": terms.l_ent,
                "mean_p": float(scores.probs[idx].mean()) if idx.size else 0.0,
                "k": Budget.for_omega(cfg.gamma, len(ctx.omega)).k,
                "seed": cfg.seed,
            }
            history.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record) + "\n")
            # sanity flag (never a hard failure): smoothed mean reward over
            # 50-step windows should not regress; slack of 0.1 keeps ordinary
            # sampling noise (~3 sigma of a 50-step window mean) from firing
            if (step + 1) % 50 == 0:
                window = float(
                    np.mean([np.mean(r["rewards"]) for r in history[-50:]])
                )
                if window_means and window < window_means[-1] - 0.1:
                    reward_regressions.append(step)
                    log.warning(
                        "smoothed reward regressed at step %d (%.4f < %.4f)",
                        step, window, window_means[-1],
                    )
                window_means.append(window)
            if total_failures > cfg.solver_failure_budget:
                aborted = True
                log.error(
                    "solver failure budget exceeded (%d failures); aborting at step %d",
                    total_failures, step,
                )
                break
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    checkpoint_path = None
    if out_dir is not None:
        checkpoint_path = out_dir / "checkpoint.json"
        save_checkpoint(checkpoint_path, params, opt, cfg, idf_table)
    result = TrainResult(
        params=params,
        opt=opt,
        idf_table=idf_table,
        history=history,
        checkpoint_path=checkpoint_path,
        metrics_path=metrics_path,
        aborted=aborted,
        reward_regressions=reward_regressions,
    )
    if aborted:
        raise SolverUnavailableError(
            f"training aborted after {total_failures} solver failures"
        )
    return result


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

VARIANTS = ("hilite", "random", "pruned", "no-highlight")


def evaluate(
    dataset: list[Instance],
    params: ScorerParams,
    solver,
    cfg: TrainConfig,
    idf_table: dict[str, float],
    reward_spec: RewardSpec | None = None,
    variant: str = "hilite",
    fmt: MarkerFormat | None = None,
    mask_sampler: SamplerKind | None = None,
) -> dict:
    """Deterministic evaluation pass: top-k selection, one solver call per
    instance, task reward, mean highlight fraction, and (when gold spans
    exist) evidence precision/recall/F1 at the configured threshold.

    Variants: "hilite" injects markers around the top-k spans, "random"
    does the same for a seeded random mask of equal budget, "pruned" feeds
    only the selected span texts, "no-highlight" passes the context through
    untouched.  ``mask_sampler`` swaps the deterministic top-k rule for one
    of the sampler kinds (seeded per instance), for sampler-sensitivity
    sweeps.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown eval variant {variant!r}")
    reward_spec = reward_spec or RewardSpec((("em", 1.0),))
    fmt = fmt or get_format(cfg.marker_format)
    contract = getattr(solver, "output_contract", "free-text")

    rewards = []
    fractions = []
    overlaps = []
    flagged = 0
    for inst in dataset:
        ctx = tokenize(inst.context)
        feats = featurize(inst.query, ctx, idf_table, cfg.idf_ceiling)
        scores = score(feats, params)
        budget = Budget.for_omega(cfg.gamma, len(ctx.omega))
        if variant == "random":
            mask = markup.random_mask(
                ctx, budget.k, rng_stream(cfg.seed, f"eval-random-{inst.id}")
            )
        elif mask_sampler is not None:
            _, mask = sample_mask(
                scores, ctx.omega, budget.k, mask_sampler,
                rng_stream(cfg.seed, f"eval-{inst.id}"),
            )
        else:
            mask = topk(scores, ctx.omega, budget.k)
        spans = markup.coalesce(mask, ctx, cfg.delta)
        if variant == "no-highlight":
            emphasized = inst.context
            fractions.append(0.0)
        elif variant == "pruned":
            emphasized = markup.prune(ctx, spans, cfg.prune_joiner)
            fractions.append(mask.sum() / max(1, len(ctx.omega)))
        else:
            emphasized = markup.inject(ctx, spans, fmt)
            fractions.append(mask.sum() / max(1, len(ctx.omega)))

        try:
            out = solver.solve(inst.query, emphasized, inst)
            parsed = parse_output(out.raw_text, contract)
            rewards.append(composite(parsed, inst.gold, reward_spec))
        except (SolverUnavailableError, ProtocolError, ParseError):
            flagged += 1
            rewards.append(0.0)

        if inst.evidence_spans:
            overlaps.append(
                evidence_overlap(scores, cfg.eval_threshold, inst.evidence_spans, ctx)
            )

    report = {
        "variant": variant,
        "n": len(dataset),
        "mean_reward": float(np.mean(rewards)) if rewards else 0.0,
        "mean_highlight_fraction": float(np.mean(fractions)) if fractions else 0.0,
        "flagged": flagged,
        "rewards": [float(r) for r in rewards],
    }
    if overlaps:
        arr = np.asarray(overlaps)
        report["evidence"] = {
            "precision": float(arr[:, 0].mean()),
            "recall": float(arr[:, 1].mean()),
            "f1": float(arr[:, 2].mean()),
        }
    return report


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path: str | Path,
    params: ScorerParams,
    opt: OptimizerState,
    cfg: TrainConfig,
    idf_table: dict[str, float],
) -> None:
    """Versioned checkpoint, written atomically (write + rename)."""
    path = Path(path)
    record = {
        "version": CHECKPOINT_VERSION,
        "params": params.to_dict(),
        "opt_state": opt.to_dict(),
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "featurizer": {"idf_table": idf_table, "idf_ceiling": cfg.idf_ceiling},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".ckpt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(record, fh)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_checkpoint(path: str | Path):
    """Load and validate a checkpoint; corruption raises IntegrityError."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            record = json.load(fh)
    except FileNotFoundError:
        raise IntegrityError(f"checkpoint not found: {path}") from None
    except (json.JSONDecodeError, OSError) as exc:
        raise IntegrityError(f"checkpoint unreadable: {exc}") from exc
    if not isinstance(record, dict) or record.get("version") != CHECKPOINT_VERSION:
        raise IntegrityError(f"unsupported checkpoint version in {path}")
    try:
        params = ScorerParams.from_dict(record["params"])
        opt = OptimizerState.from_dict(record["opt_state"])
        cfg = TrainConfig.from_dict(record["config"])
        idf_table = dict(record["featurizer"]["idf_table"])
    except (KeyError, TypeError, ValueError, HiliteError) as exc:
        raise IntegrityError(f"checkpoint {path} is corrupt: {exc}") from exc
    return params, opt, cfg, idf_table
