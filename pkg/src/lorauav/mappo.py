"""Multi-agent PPO with per-agent actors and one centralised critic.

Actors only ever see their own agent's observation. The critic sees the
rescaled global state with a one-hot agent id appended, so a single network
serves every agent's (differently weighted) reward.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .env import ActionCommand, LoraUavEnv, StepResult
from .neural import Actor, Adam, ValueNet, clip_grad_norm, load_checkpoint, save_checkpoint
from .scenario import Scenario

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "return", "ee", "actor_loss", "critic_loss", "entropy")


@dataclass
class TransitionBatch:
    obs: np.ndarray  # (T, U, obs_dim)
    states: np.ndarray  # (T, state_dim), raw global state
    raw_move: np.ndarray  # (T, U, 3) pre-squash movement samples
    sf: np.ndarray  # (T, U, n)
    power: np.ndarray  # (T, U, n)
    log_prob: np.ndarray  # (T, U)
    rewards: np.ndarray  # (T, U), unscaled
    global_ee: np.ndarray  # (T,)
    values: np.ndarray  # (T, U)
    next_values: np.ndarray  # (T, U) value of the successor state inside the same episode
    dones: np.ndarray  # (T,)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)


def compute_gae(rewards, values, gamma: float, lam: float, dones=None, next_values=None):
    """Generalised advantage estimates by reverse recursion.

    ``values`` holds ``T + 1`` entries (the last is the bootstrap). ``dones[t]``
    cuts the recursion after step ``t``; the successor value at a cut is taken
    from ``next_values[t]`` when given (time-limit truncation) and is zero
    otherwise (true termination). Works along axis 0 with any trailing shape.
    """
    rewards = np.asarray(rewards, float)
    values = np.asarray(values, float)
    T = len(rewards)
    if len(values) != T + 1:
        raise ValueError(f"values must have {T + 1} entries, got {len(values)}")
    nxt = values[1:].copy()
    cut = np.zeros(T, bool) if dones is None else np.asarray(dones, bool)
    if next_values is not None:
        nxt = np.where(_expand(cut, nxt), np.asarray(next_values, float), nxt)
    elif dones is not None:
        nxt = np.where(_expand(cut, nxt), 0.0, nxt)
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0])
    for t in reversed(range(T)):
        delta = rewards[t] + gamma * nxt[t] - values[t]
        last = delta + gamma * lam * (0.0 if cut[t] else 1.0) * last
        adv[t] = last
    return adv, adv + values[:T]


def _expand(mask, like):
    return mask.reshape(mask.shape + (1,) * (like.ndim - 1))


def ppo_actor_loss(log_prob, old_log_prob, advantages, entropy, clip: float, entropy_coef: float):
    """Clipped surrogate with entropy bonus.

    Returns ``(loss, dloss/dlog_prob, dloss/dentropy, stats)``.
    """
    n = len(log_prob)
    ratio = np.exp(log_prob - old_log_prob)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr1, surr2 = ratio * advantages, clipped * advantages
    surrogate = np.minimum(surr1, surr2)
    loss = -surrogate.mean() - entropy_coef * entropy.mean()
    # gradient only flows through the unclipped branch when it is the minimum
    active = surr1 <= surr2
    dlogp = np.where(active, -advantages * ratio / n, 0.0)
    dent = np.full(n, -entropy_coef / n)
    stats = {
        "surrogate": float(surrogate.mean()),
        "ratio_dev": float(np.abs(ratio - 1.0).mean()),
        "clip_frac": float((np.abs(ratio - 1.0) > clip).mean()),
    }
    return float(loss), dlogp, dent, stats


def value_loss(values, returns, coef: float):
    err = values - returns
    return float(coef * np.mean(err**2)), 2.0 * coef * err / len(err)


class Mappo:
    """Actors, critic and their optimizers for one environment."""

    def __init__(self, env: LoraUavEnv, config: TrainConfig, seed: int = 0):
        self.env = env
        self.config = config.validate()
        init_ss, sample_ss, env_ss, perm_ss = np.random.SeedSequence(seed).spawn(4)
        init_rng = np.random.Generator(np.random.PCG64(init_ss))
        self.rng = np.random.Generator(np.random.PCG64(sample_ss))
        self.perm_rng = np.random.Generator(np.random.PCG64(perm_ss))
        self.env_seed = int(env_ss.generate_state(1)[0])
        n_sf, n_pw = len(env.sf_values), len(env.power_values)
        self.actors = [
            Actor(env.obs_dim, env.devices_per_agent, n_sf, n_pw, config.hidden, init_rng, config.log_std_init)
            for _ in range(env.num_agents)
        ]
        self.critic = ValueNet(env.state_dim + env.num_agents, config.hidden, init_rng)
        self.actor_opts = [Adam([a.flat], config.lr_actor) for a in self.actors]
        self.critic_opt = Adam([self.critic.flat], config.lr_critic)
        self._last: StepResult | None = None
        self.env_steps = 0

    # --- acting -----------------------------------------------------------

    def critic_inputs(self, states: np.ndarray) -> np.ndarray:
        """``(B, state_dim)`` raw states -> ``(B, U, state_dim + U)`` critic rows."""
        states = np.atleast_2d(states)
        u = self.env.num_agents
        scaled = self.env.critic_input(states)
        rows = np.repeat(scaled[:, None, :], u, axis=1)
        ids = np.broadcast_to(np.eye(u), (len(states), u, u))
        return np.concatenate([rows, ids], axis=2)

    def values(self, states: np.ndarray) -> np.ndarray:
        x = self.critic_inputs(states)
        b, u, d = x.shape
        return self.critic.value(x.reshape(b * u, d)).reshape(b, u)

    def act(self, observations):
        """Sample one action per agent from that agent's own observation only."""
        draws = [actor.sample(obs, self.rng) for actor, obs in zip(self.actors, observations)]
        commands = [ActionCommand(np.tanh(raw), sf, pw) for raw, sf, pw, _, _ in draws]
        return commands, draws

    # --- rollout + update -------------------------------------------------

    def collect_rollout(self, T: int) -> TransitionBatch:
        env, u = self.env, self.env.num_agents
        if self._last is None or self._last.done:
            self._last = env.reset(seed=self.env_seed if self._last is None else None)
        n = env.devices_per_agent
        buf = TransitionBatch(
            obs=np.zeros((T, u, env.obs_dim)), states=np.zeros((T, env.state_dim)),
            raw_move=np.zeros((T, u, 3)), sf=np.zeros((T, u, n), int), power=np.zeros((T, u, n), int),
            log_prob=np.zeros((T, u)), rewards=np.zeros((T, u)), global_ee=np.zeros(T),
            values=np.zeros((T, u)), next_values=np.zeros((T, u)), dones=np.zeros(T, bool),
        )
        cur = self._last
        cur_value = self.values(cur.global_state)[0]
        for t in range(T):
            commands, draws = self.act(cur.observations)
            buf.obs[t] = np.stack(cur.observations)
            buf.states[t] = cur.global_state
            buf.values[t] = cur_value
            for i, (raw, sf, pw, lp, _) in enumerate(draws):
                buf.raw_move[t, i], buf.sf[t, i], buf.power[t, i], buf.log_prob[t, i] = raw, sf, pw, lp
            nxt = env.step(commands)
            self.env_steps += 1
            buf.rewards[t] = nxt.rewards
            buf.global_ee[t] = nxt.info["global_ee"]
            buf.dones[t] = nxt.done
            buf.next_values[t] = self.values(nxt.global_state)[0]
            if nxt.done:
                nxt = env.reset()
                cur_value = self.values(nxt.global_state)[0]
            else:
                cur_value = buf.next_values[t]
            cur = nxt
        self._last = cur
        cfg = self.config
        bootstrap = np.concatenate([buf.values, cur_value[None]])
        buf.advantages, buf.returns = compute_gae(
            buf.rewards * cfg.reward_scale, bootstrap, cfg.gamma, cfg.gae_lambda,
            dones=buf.dones, next_values=buf.next_values)
        return buf

    def update(self, batch: TransitionBatch) -> dict:
        cfg = self.config
        adv = batch.advantages
        adv = (adv - adv.mean(0)) / (adv.std(0) + 1e-8)
        crit_x = self.critic_inputs(batch.states)
        T, u = batch.rewards.shape
        stats = {"actor_loss": [], "critic_loss": [], "entropy": [], "clip_frac": []}
        first_ratio_dev = None
        for _ in range(cfg.epochs):
            order = self.perm_rng.permutation(T)
            for mb in np.array_split(order, cfg.minibatches):
                for i, (actor, opt) in enumerate(zip(self.actors, self.actor_opts)):
                    logp, ent = actor.evaluate(batch.obs[mb, i], batch.raw_move[mb, i], batch.sf[mb, i],
                                               batch.power[mb, i])
                    loss, dlogp, dent, st = ppo_actor_loss(
                        logp, batch.log_prob[mb, i], adv[mb, i], ent, cfg.clip, cfg.entropy_coef)
                    if not np.isfinite(loss):
                        raise FloatingPointError(
                            f"non-finite actor loss for agent {i} at env step {self.env_steps}: "
                            f"log_prob range [{logp.min()}, {logp.max()}], log_std {actor.log_std}")
                    if first_ratio_dev is None and i == 0:
                        first_ratio_dev = st["ratio_dev"]
                    actor.backward(dlogp, dent)
                    grads, _ = clip_grad_norm([actor.grad_flat], cfg.max_grad_norm)
                    opt.step(grads)
                    actor.clamp_log_std()
                    stats["actor_loss"].append(loss)
                    stats["entropy"].append(float(ent.mean()))
                    stats["clip_frac"].append(st["clip_frac"])
                x = crit_x[mb].reshape(len(mb) * u, -1)
                v = self.critic.value(x)
                closs, dv = value_loss(v, batch.returns[mb].reshape(-1), cfg.value_loss_coef)
                if not np.isfinite(closs):
                    raise FloatingPointError(f"non-finite critic loss at env step {self.env_steps}")
                self.critic.backward(dv)
                grads, _ = clip_grad_norm([self.critic.grad_flat], cfg.max_grad_norm)
                self.critic_opt.step(grads)
                stats["critic_loss"].append(closs)
        out = {k: float(np.mean(v)) for k, v in stats.items()}
        out["first_ratio_dev"] = first_ratio_dev
        return out

    # --- evaluation / persistence -----------------------------------------

    def greedy_actions(self, observations) -> list[ActionCommand]:
        return [ActionCommand(*actor.greedy(obs)) for actor, obs in zip(self.actors, observations)]

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for i, a in enumerate(self.actors):
            for j, p in enumerate(a.params):
                out[f"actor{i}.{j}"] = p
        for j, p in enumerate(self.critic.params):
            out[f"critic.{j}"] = p
        return out

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for i, a in enumerate(self.actors):
            for j, p in enumerate(a.params):
                p[...] = arrays[f"actor{i}.{j}"]
        for j, p in enumerate(self.critic.params):
            p[...] = arrays[f"critic.{j}"]

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.state_dict())

    def load(self, path: str | Path) -> None:
        self.load_state_dict(load_checkpoint(path))


def evaluate_policy(env: LoraUavEnv, policy, episodes: int, seed: int) -> list[float]:
    """Mean system EE over every step of each episode.

    ``policy(observations, env)`` returns one ActionCommand per agent.
    """
    out = []
    first = True
    for _ in range(episodes):
        res = env.reset(seed=seed if first else None)
        first = False
        ees = []
        while not res.done:
            res = env.step(policy(res.observations, env))
            ees.append(res.info["global_ee"])
        out.append(float(np.mean(ees)))
    return out


@dataclass
class TrainResult:
    agent: Mappo
    metrics: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


def write_metrics(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([r["step"]] + [repr(float(r[c])) for c in METRIC_COLUMNS[1:]])


def read_metrics(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def train(scenario: Scenario, config: TrainConfig, seed: int, checkpoint_dir: str | Path | None = None,
          progress_every: int = 0) -> TrainResult:
    """Collect / update until ``config.total_steps`` environment steps.

    One metric row per rollout. ``return`` is the rollout's mean per-agent
    step reward scaled to a full episode (``x max_steps``); ``ee`` is the mean
    system EE over the rollout.
    """
    env = LoraUavEnv(scenario, seed=seed)
    agent = Mappo(env, config, seed)
    result = TrainResult(agent)
    n_updates = config.total_steps // config.rollout_length
    horizon = scenario.config.max_steps
    for k in range(1, n_updates + 1):
        batch = agent.collect_rollout(config.rollout_length)
        st = agent.update(batch)
        result.metrics.append({
            "step": agent.env_steps,
            "return": float(batch.rewards.mean() * horizon),
            "ee": float(batch.global_ee.mean()),
            "actor_loss": st["actor_loss"],
            "critic_loss": st["critic_loss"],
            "entropy": st["entropy"],
        })
        if checkpoint_dir is not None and config.checkpoint_every and k % config.checkpoint_every == 0:
            path = Path(checkpoint_dir) / f"checkpoint_{agent.env_steps:09d}.bin"
            agent.save(path)
            result.checkpoints.append(path)
        if progress_every and k % progress_every == 0:
            m = result.metrics[-1]
            log.info("step %d return %.4g ee %.4g entropy %.3f", m["step"], m["return"], m["ee"], m["entropy"])
    return result
