"""Imitation and reinforcement training for audience agents.

The workflow mirrors the deployment pipeline: clone a teacher's demonstration
trajectories with supervised regression, fine-tune with clipped-surrogate PPO
and generalized advantage estimation across parallel environments, keep the
top fraction of candidates by cumulative evaluation reward, and roll the
survivors out to locomotion traces.

All optimization runs in float64 numpy with analytic gradients from
``PolicyNetwork.backward``; given a seed, training statistics are
bit-reproducible on one machine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..rng import substream
from ..stage import CueSheet, GuidanceMode, Stage, StageEvent, initial_state
from ..stage import step as stage_step
from ..trace import LocomotionTrace
from .env import MAX_TURN_RAD_S, AgentAction, AudienceEnv
from .policy import PolicyNetwork, _log_softmax, _softmax


class TrainingError(Exception):
    pass


class EmptyDemos(TrainingError):
    pass


class EmptyCandidates(TrainingError):
    pass


class DivergenceDetected(TrainingError):
    pass


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 3e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


# ---------------------------------------------------------------------------
# demonstrations and behavior cloning


@dataclass(frozen=True)
class DemonstrationSet:
    """Episodes of aligned (observation, continuous action, gesture) arrays."""

    episodes: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        obs = np.vstack([e[0] for e in self.episodes])
        cont = np.vstack([e[1] for e in self.episodes])
        disc = np.concatenate([e[2] for e in self.episodes])
        return obs, cont, disc

    def __len__(self) -> int:
        return sum(len(e[0]) for e in self.episodes)


def demos_from_traces(traces, env: AudienceEnv) -> DemonstrationSet:
    """Reconstruct demonstrations from recorded pose traces via env replay."""
    episodes = []
    for trace in traces:
        episodes.append(env.replay(trace))
    if not episodes or sum(len(e[0]) for e in episodes) == 0:
        raise EmptyDemos("no demonstration samples")
    return DemonstrationSet(tuple(episodes))


def scripted_expert_episode(
    env: AudienceEnv, seed: int, max_steps: int | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, LocomotionTrace]:
    """Teacher run: steer through the zones in layout order, then exit.

    Returns the (obs, cont, disc) demo arrays plus the walked trace.
    """
    obs = env.reset(seed=seed)
    max_steps = max_steps if max_steps is not None else env.max_steps
    obs_rows, cont_rows, disc_rows = [], [], []
    rows = [(0.0, env.x, env.y, env.heading)]
    t = 0.0
    for _ in range(max_steps):
        target = None
        for i, zone in enumerate(env.layout.zones):
            if not env.visited[i]:
                target = zone.center
                break
        if target is None:
            target = env.layout.exit_point
        desired = math.atan2(target[1] - env.y, target[0] - env.x)
        err = (desired - env.heading + math.pi) % (2.0 * math.pi) - math.pi
        turn = min(1.0, max(-1.0, err / (MAX_TURN_RAD_S * env.dt)))
        forward = 1.0 if abs(err) < math.pi / 3 else 0.0
        action = AgentAction(forward, turn, 0)
        obs_rows.append(obs)
        cont_rows.append([forward, turn])
        disc_rows.append(0)
        obs, _, done = env.step(action)
        t += env.dt
        rows.append((t, env.x, env.y, env.heading))
        if done:
            break
    arr = np.asarray(rows)
    trace = LocomotionTrace(arr[:, 0], arr[:, 1:3], arr[:, 3])
    return np.asarray(obs_rows), np.asarray(cont_rows), np.asarray(disc_rows, dtype=np.intp), trace


def expert_demonstrations(env: AudienceEnv, seeds) -> DemonstrationSet:
    episodes = []
    for s in seeds:
        o, c, d, _ = scripted_expert_episode(env, int(s))
        episodes.append((o, c, d))
    return DemonstrationSet(tuple(episodes))


def bc_train(
    demos: DemonstrationSet,
    policy: PolicyNetwork,
    epochs: int,
    lr: float = 3e-3,
    seed: int = 0,
) -> tuple[PolicyNetwork, list[float]]:
    """Supervised cloning: MSE on the continuous mean, CE on gesture logits.

    Full-batch Adam in a fixed order; returns the trained copy and the loss
    per epoch. Zero epochs returns an untouched copy.
    """
    if len(demos) == 0:
        raise EmptyDemos("demonstration set is empty")
    net = policy.copy()
    if epochs <= 0:
        return net, []
    obs, cont, disc = demos.stacked()
    opt = Adam(net.params, lr=lr)
    losses: list[float] = []
    b = len(obs)
    onehot = np.zeros((b, net.disc_dim))
    onehot[np.arange(b), disc] = 1.0
    for _ in range(epochs):
        (mu, _, logits, _), hs = net._forward_cache(obs)
        mse = float(np.mean((mu - cont) ** 2))
        logp = _log_softmax(logits)
        ce = float(-np.mean(logp[np.arange(b), disc]))
        losses.append(mse + ce)
        d_mu = 2.0 * (mu - cont) / mu.size
        d_logits = (_softmax(logits) - onehot) / b
        grads = net.backward(hs, d_mu, np.zeros_like(mu), d_logits, np.zeros(b))
        opt.step(net.params, grads)
    return net, losses


# ---------------------------------------------------------------------------
# PPO


@dataclass(frozen=True)
class TrainingRun:
    seed: int
    total_steps: int = 200_000     # desk scale; the deployment runs used 2M
    n_envs: int = 18
    horizon: int = 128
    minibatch: int = 256
    epochs: int = 3
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    vf_coef: float = 0.5
    ent_coef: float = 0.01


def _policy_loss_grads(
    policy: PolicyNetwork,
    batch: dict[str, np.ndarray],
    clip: float,
    vf_coef: float,
    ent_coef: float,
):
    """Clipped-surrogate loss (+ value/entropy terms) and parameter grads."""
    obs = batch["obs"]
    cont = batch["cont"]
    disc = batch["disc"]
    logp_old = batch["logp"]
    adv = batch["adv"]
    ret = batch["ret"]
    b = len(obs)

    (mu, log_std, logits, value), hs = policy._forward_cache(obs)
    std = np.exp(log_std)
    z = (cont - mu) / std
    logp_new = policy.log_prob(mu, log_std, logits, cont, disc)
    ratio = np.exp(logp_new - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    loss_pi = float(-np.mean(np.minimum(surr1, surr2)))
    loss_v = 0.5 * float(np.mean((value - ret) ** 2))
    entropy = policy.entropy(log_std, logits)
    loss_ent = float(-np.mean(entropy))
    loss = loss_pi + vf_coef * loss_v + ent_coef * loss_ent

    # d loss_pi / d logp_new: active only where the unclipped branch is the min
    use1 = surr1 <= surr2
    g_logp = np.where(use1, -adv * ratio, 0.0) / b

    probs = _softmax(logits)
    onehot = np.zeros_like(probs)
    onehot[np.arange(b), disc] = 1.0

    d_mu = g_logp[:, None] * (z / std)
    d_log_std = g_logp[:, None] * (z**2 - 1.0)
    d_logits = g_logp[:, None] * (onehot - probs)
    d_value = np.zeros(b)
    if vf_coef:
        d_value = vf_coef * (value - ret) / b
    if ent_coef:
        d_log_std = d_log_std + ent_coef * (-1.0 / b)
        logp_all = _log_softmax(logits)
        d_logits = d_logits + ent_coef * (probs * (logp_all + entropy_disc(probs, logp_all)[:, None])) / b

    grads = policy.backward(hs, d_mu, d_log_std, d_logits, d_value)
    diags = {"loss": loss, "loss_pi": loss_pi, "loss_v": loss_v, "entropy": -loss_ent}
    return loss, grads, diags


def entropy_disc(probs: np.ndarray, logp: np.ndarray) -> np.ndarray:
    return -(probs * logp).sum(axis=1)


def ppo_surrogate(policy: PolicyNetwork, batch: dict[str, np.ndarray], clip: float = 0.2):
    """Pure clipped surrogate and its gradients (no value/entropy terms)."""
    return _policy_loss_grads(policy, batch, clip, vf_coef=0.0, ent_coef=0.0)


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_values: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over a (T, N) rollout block."""
    horizon = len(rewards)
    adv = np.zeros_like(rewards)
    lastgae = np.zeros_like(last_values)
    for t in reversed(range(horizon)):
        nonterminal = 1.0 - dones[t]
        next_value = values[t + 1] if t + 1 < horizon else last_values
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        lastgae = delta + gamma * lam * nonterminal * lastgae
        adv[t] = lastgae
    return adv, adv + values


def ppo_train(env_factory, policy: PolicyNetwork, run: TrainingRun):
    """Clipped-surrogate PPO across parallel environments.

    ``env_factory(i)`` builds env i; environments auto-reset on episode end.
    Returns the trained policy and one stats row per iteration. Raises
    DivergenceDetected on non-finite losses.
    """
    net = policy.copy()
    if run.total_steps <= 0:
        return net, []
    envs: list[AudienceEnv] = [env_factory(i) for i in range(run.n_envs)]
    seed_rng = substream(run.seed, "env-seeds")
    env_seeds = seed_rng.integers(0, 2**62, size=run.n_envs)
    obs = np.stack([envs[i].reset(seed=int(env_seeds[i])) for i in range(run.n_envs)])
    act_rng = [substream(run.seed, "actions", i) for i in range(run.n_envs)]
    shuffle_rng = substream(run.seed, "minibatch-shuffle")
    opt = Adam(net.params, lr=run.lr)

    stats: list[dict] = []
    steps_done = 0
    iteration = 0
    recent_returns: list[float] = []
    recent_lengths: list[int] = []
    recent_zones: list[int] = []

    while steps_done < run.total_steps:
        iteration += 1
        t_obs = np.zeros((run.horizon, run.n_envs, net.obs_dim))
        t_cont = np.zeros((run.horizon, run.n_envs, net.cont_dim))
        t_disc = np.zeros((run.horizon, run.n_envs), dtype=np.intp)
        t_logp = np.zeros((run.horizon, run.n_envs))
        t_rew = np.zeros((run.horizon, run.n_envs))
        t_done = np.zeros((run.horizon, run.n_envs))
        t_val = np.zeros((run.horizon, run.n_envs))

        ep_returns: list[float] = []
        ep_lengths: list[int] = []
        ep_zones: list[int] = []
        for t in range(run.horizon):
            t_obs[t] = obs
            for i, env in enumerate(envs):
                cont, disc, logp, value = net.sample(obs[i][None, :], act_rng[i])
                t_cont[t, i] = cont[0]
                t_disc[t, i] = disc[0]
                t_logp[t, i] = logp[0]
                t_val[t, i] = value[0]
                next_obs, reward, done = env.step(
                    AgentAction(float(cont[0, 0]), float(cont[0, 1]), int(disc[0]))
                )
                t_rew[t, i] = reward
                t_done[t, i] = float(done)
                if done:
                    ep_returns.append(env.cumulative_reward)
                    ep_lengths.append(env.steps)
                    ep_zones.append(int(env.visited.sum()))
                    next_obs = env.reset()
                obs[i] = next_obs
        steps_done += run.horizon * run.n_envs

        last_values = net.forward(obs)[3]
        adv, ret = compute_gae(
            t_rew, t_val, t_done, last_values, run.gamma, run.gae_lambda
        )

        flat = {
            "obs": t_obs.reshape(-1, net.obs_dim),
            "cont": t_cont.reshape(-1, net.cont_dim),
            "disc": t_disc.reshape(-1),
            "logp": t_logp.reshape(-1),
            "adv": adv.reshape(-1),
            "ret": ret.reshape(-1),
        }
        n = len(flat["obs"])
        last_diags: dict = {}
        for _ in range(run.epochs):
            order = shuffle_rng.permutation(n)
            for start in range(0, n, run.minibatch):
                idx = order[start : start + run.minibatch]
                batch = {k: v[idx] for k, v in flat.items()}
                a = batch["adv"]
                batch["adv"] = (a - a.mean()) / (a.std() + 1e-8)
                loss, grads, diags = _policy_loss_grads(
                    net, batch, run.clip, run.vf_coef, run.ent_coef
                )
                if not math.isfinite(loss):
                    raise DivergenceDetected(f"non-finite loss at iteration {iteration}")
                opt.step(net.params, grads)
                last_diags = diags

        if ep_returns:
            recent_returns = ep_returns
            recent_lengths = ep_lengths
            recent_zones = ep_zones
        stats.append(
            {
                "iteration": iteration,
                "steps": steps_done,
                "mean_reward": float(np.mean(recent_returns)) if recent_returns else 0.0,
                "mean_episode_length": float(np.mean(recent_lengths)) if recent_lengths else 0.0,
                "mean_zones_entered": float(np.mean(recent_zones)) if recent_zones else 0.0,
                "loss": last_diags.get("loss", 0.0),
                "loss_pi": last_diags.get("loss_pi", 0.0),
                "loss_v": last_diags.get("loss_v", 0.0),
                "entropy": last_diags.get("entropy", 0.0),
            }
        )
    return net, stats


def training_stats_csv(stats) -> str:
    cols = [
        "iteration", "steps", "mean_reward", "mean_episode_length",
        "mean_zones_entered", "loss", "loss_pi", "loss_v", "entropy",
    ]
    lines = [",".join(cols) + "\n"]
    for row in stats:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# model selection


def select_models(candidates, keep_fraction: float = 0.30) -> list[PolicyNetwork]:
    """Keep policies at or above the (1 - keep_fraction) reward quantile.

    With n distinct rewards exactly ceil(keep_fraction * n) survive; ties at
    the threshold are all kept. Order is preserved.
    """
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("no candidate policies")
    rewards = sorted((r for _, r in candidates), reverse=True)
    m = max(1, math.ceil(keep_fraction * len(candidates)))
    threshold = rewards[m - 1]
    return [p for p, r in candidates if r >= threshold]


# ---------------------------------------------------------------------------
# rollout


@dataclass(frozen=True)
class RolloutResult:
    trace: LocomotionTrace
    events: tuple[StageEvent, ...]
    zone_order: tuple[str, ...]
    total_reward: float
    zones_entered: int


def _corridor_sheet(env: AudienceEnv) -> CueSheet:
    return CueSheet(
        (
            Stage(
                "corridor",
                env.layout.zones,
                GuidanceMode.NONE,
                env.layout.exit_point,
                env.layout.exit_radius,
            ),
        )
    )


def rollout(
    policy: PolicyNetwork,
    env: AudienceEnv,
    episodes: int,
    seed: int,
    deterministic: bool = False,
) -> list[RolloutResult]:
    """Run evaluation episodes; returns traces plus replayed stage events."""
    results: list[RolloutResult] = []
    ep_seed_rng = substream(seed, "rollout-episodes")
    act_rng = substream(seed, "rollout-actions")
    sheet = _corridor_sheet(env)
    for _ in range(episodes):
        obs = env.reset(seed=int(ep_seed_rng.integers(0, 2**62)))
        rows = [(0.0, env.x, env.y, env.heading)]
        order: list[str] = []
        prev_visited = env.visited.copy()
        t = 0.0
        done = False
        while not done:
            if deterministic:
                mu, gesture = policy.mean_action(obs[None, :])
                action = AgentAction(float(mu[0, 0]), float(mu[0, 1]), int(gesture[0]))
            else:
                cont, disc, _, _ = policy.sample(obs[None, :], act_rng)
                action = AgentAction(float(cont[0, 0]), float(cont[0, 1]), int(disc[0]))
            obs, _, done = env.step(action)
            t += env.dt
            rows.append((t, env.x, env.y, env.heading))
            for i in np.nonzero(env.visited & ~prev_visited)[0]:
                order.append(env.layout.zones[int(i)].id)
            prev_visited = env.visited.copy()
        arr = np.asarray(rows)
        trace = LocomotionTrace(arr[:, 0], arr[:, 1:3], arr[:, 3])
        state = initial_state(sheet)
        events: list[StageEvent] = []
        for k in range(1, len(trace)):
            state, evs = stage_step(state, sheet, trace.positions[k], env.dt)
            events.extend(evs)
        results.append(
            RolloutResult(
                trace,
                tuple(events),
                tuple(order),
                env.cumulative_reward,
                int(env.visited.sum()),
            )
        )
    return results


def rollout_group(
    policy: PolicyNetwork, env_factory, n_agents: int, episodes: int, seed: int
) -> list[list[RolloutResult]]:
    """Independent agents sharing one policy (weights shared, state not)."""
    return [
        rollout(policy, env_factory(i), episodes, seed + i) for i in range(n_agents)
    ]
