"""Client/server protocol for computing a global AUC over split labels.

A run has four steps:

1. every client sends its prediction scores, shuffled;
2. the server ranks all scores globally and returns each client its ranks;
3. every client reports (localSum, localP, localN), either exactly on
   randomized-response labels or perturbed with Laplace/Gaussian noise;
4. the server sums the reports and evaluates the rank-sum AUC formula,
   debiasing it when labels were flipped.

No message type has a label field.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
from collections.abc import Iterable, Sequence
from typing import IO, Union

import numpy as np

from fedauc.allocation import (
    beta_star,
    effective_beta,
    orthogonal_decompose,
    orthogonal_release,
    split_budget_naive,
)
from fedauc.core_metrics import AucValue, Dataset, rank_scores
from fedauc.debias import NoiseRates, debias_auc, estimate_base_rate
from fedauc.errors import DegenerateCountsError, InvalidInputError, ProtocolError
from fedauc.mechanisms import (
    BudgetEntry,
    Mechanism,
    PrivacyBudget,
    flip_from_uniform,
    gaussian_from_uniform,
    laplace_from_uniform,
    rr_flip_probability,
)
from fedauc.rng import RngStream


class Strategy(str, enum.Enum):
    IID = "iid"
    NON_IID = "noniid"


class PNMode(str, enum.Enum):
    ESTIMATED = "estimated"
    ORACLE = "oracle"


@dataclasses.dataclass(frozen=True, eq=False)
class PartitionPlan:
    assignment: np.ndarray
    k: int
    strategy: Strategy

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=np.int64).copy()
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)
        sizes = np.bincount(assignment, minlength=self.k)
        if sizes.size != self.k or (sizes == 0).any():
            raise InvalidInputError("every client needs at least one sample")

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def client_indices(self) -> list[np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])


def partition(dataset: Dataset, k: int, strategy: Strategy | str,
              rng: RngStream | None = None) -> PartitionPlan:
    """Assigns samples to ``k`` clients.

    IID deals a random permutation round-robin, so sizes differ by at most
    one.  Non-IID sorts by score and cuts the order into ``k`` contiguous
    blocks of near-equal size.
    """
    strategy = Strategy(strategy)
    m = len(dataset)
    if not 1 <= k <= m:
        raise InvalidInputError(f"need 1 <= k <= M, got k={k}, M={m}")
    assignment = np.empty(m, dtype=np.int64)
    if strategy is Strategy.IID:
        if rng is None:
            raise InvalidInputError("IID partitioning needs an rng")
        assignment[rng.permutation(m)] = np.arange(m) % k
    else:
        order = np.argsort(dataset.scores, kind="stable")
        for client, block in enumerate(np.array_split(order, k)):
            assignment[block] = client
    return PartitionPlan(assignment, k, strategy)


# -- wire format ------------------------------------------------------------

def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


@dataclasses.dataclass(frozen=True)
class ScoresMessage:
    client_id: int
    scores: tuple[float, ...]
    kind = "scores"

    def to_json(self) -> str:
        return _dumps({"kind": self.kind, "client_id": self.client_id,
                       "scores": list(self.scores)})


@dataclasses.dataclass(frozen=True)
class RanksMessage:
    client_id: int
    ranks: tuple[int, ...]
    kind = "ranks"

    def to_json(self) -> str:
        return _dumps({"kind": self.kind, "client_id": self.client_id,
                       "ranks": list(self.ranks)})


@dataclasses.dataclass(frozen=True)
class StatsMessage:
    client_id: int
    sum: float
    p: float
    n: float
    kind = "stats"

    def to_json(self) -> str:
        return _dumps({"kind": self.kind, "client_id": self.client_id,
                       "sum": self.sum, "p": self.p, "n": self.n})


@dataclasses.dataclass(frozen=True)
class ResultMessage:
    auc: float
    kind = "result"

    def to_json(self) -> str:
        return _dumps({"kind": self.kind, "auc": self.auc})


ProtocolMessage = Union[ScoresMessage, RanksMessage, StatsMessage, ResultMessage]
MESSAGE_TYPES = (ScoresMessage, RanksMessage, StatsMessage, ResultMessage)


def message_from_json(line: str) -> ProtocolMessage:
    obj = json.loads(line)
    kind = obj.get("kind")
    if kind == "scores":
        return ScoresMessage(int(obj["client_id"]), tuple(float(s) for s in obj["scores"]))
    if kind == "ranks":
        return RanksMessage(int(obj["client_id"]), tuple(int(r) for r in obj["ranks"]))
    if kind == "stats":
        return StatsMessage(int(obj["client_id"]), float(obj["sum"]),
                            float(obj["p"]), float(obj["n"]))
    if kind == "result":
        return ResultMessage(float(obj["auc"]))
    raise ProtocolError(f"unknown message kind {kind!r}")


class InMemoryTransport:
    """Delivers messages as-is and keeps the transcript."""

    def __init__(self):
        self.transcript: list[ProtocolMessage] = []

    def send(self, message: ProtocolMessage) -> ProtocolMessage:
        self.transcript.append(message)
        return message


class JsonLinesTransport(InMemoryTransport):
    """Serialises every message to a text stream and delivers the decoded copy."""

    def __init__(self, stream: IO[str]):
        super().__init__()
        self.stream = stream

    def send(self, message: ProtocolMessage) -> ProtocolMessage:
        line = message.to_json()
        self.stream.write(line + "\n")
        return super().send(message_from_json(line))


def read_transcript(stream: Iterable[str]) -> list[ProtocolMessage]:
    return [message_from_json(line) for line in stream if line.strip()]


# -- protocol steps -----------------------------------------------------------

@dataclasses.dataclass(eq=False)
class ClientState:
    """Everything one label-holding party keeps to itself."""

    client_id: int
    scores: np.ndarray
    labels: np.ndarray
    flipped: np.ndarray | None = None
    submit_order: np.ndarray | None = None
    ranks: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.scores.size)


def make_clients(dataset: Dataset, plan: PartitionPlan) -> list[ClientState]:
    return [ClientState(k, dataset.scores[idx], dataset.labels[idx])
            for k, idx in enumerate(plan.client_indices())]


def client_submit_scores(client: ClientState, rng: RngStream) -> ScoresMessage:
    """Step 1; ``rng`` is the client's ``shuffle`` stream."""
    client.submit_order = rng.permutation(client.size)
    return ScoresMessage(client.client_id,
                         tuple(client.scores[client.submit_order].tolist()))


def server_rank_and_dispatch(messages: Sequence[ScoresMessage], k: int) -> list[RanksMessage]:
    """Step 2: rank the union of all scores, return each client its slice."""
    by_client = {}
    for msg in messages:
        if msg.client_id in by_client:
            raise ProtocolError(f"client {msg.client_id} reported scores twice")
        by_client[msg.client_id] = msg
    missing = sorted(set(range(k)) - set(by_client))
    if missing or len(by_client) != k:
        raise ProtocolError(f"scores missing from clients {missing}")
    ordered = [by_client[c] for c in range(k)]
    ranks = rank_scores(np.concatenate([np.asarray(m.scores, dtype=np.float64)
                                        for m in ordered]))
    out, start = [], 0
    for msg in ordered:
        stop = start + len(msg.scores)
        out.append(RanksMessage(msg.client_id, tuple(ranks[start:stop].tolist())))
        start = stop
    return out


def client_receive_ranks(client: ClientState, message: RanksMessage) -> np.ndarray:
    if message.client_id != client.client_id:
        raise ProtocolError("ranks delivered to the wrong client")
    if len(message.ranks) != client.size or client.submit_order is None:
        raise ProtocolError(f"client {client.client_id}: rank count mismatch")
    ranks = np.empty(client.size, dtype=np.int64)
    ranks[client.submit_order] = message.ranks
    client.ranks = ranks
    return ranks


def _local_ranks(client: ClientState, ranks) -> np.ndarray:
    if ranks is None:
        ranks = client.ranks
    if ranks is None:
        raise ProtocolError(f"client {client.client_id} has no ranks yet")
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.shape != (client.size,):
        raise ProtocolError(f"client {client.client_id}: rank count mismatch")
    return ranks


def client_flip_labels(client: ClientState, epsilon: float, rng: RngStream) -> np.ndarray:
    """Randomized response, applied at most once per client; later calls reuse it."""
    if client.flipped is None:
        rho = rr_flip_probability(epsilon)
        client.flipped = flip_from_uniform(client.labels, rng.uniform(client.size), rho)
    return client.flipped


def client_stats_rr(client: ClientState, ranks, epsilon: float, rng: RngStream,
                    ledger: list[BudgetEntry] | None = None) -> StatsMessage:
    """Step 3 under randomized response; ``rng`` is the client's ``flip`` stream."""
    ranks = _local_ranks(client, ranks)
    flipped = client_flip_labels(client, epsilon, rng).astype(np.int64)
    local_p = int(flipped.sum())
    if ledger is not None:
        ledger.append(BudgetEntry(client.client_id, "flip", epsilon))
    return StatsMessage(client.client_id, float(np.dot(ranks, flipped)),
                        float(local_p), float(client.size - local_p))


def _gaussian_multiplier(epsilon, delta):
    """sqrt(2 ln(1.25/delta)) / epsilon, or 0 for an unlimited budget."""
    if math.isinf(epsilon):
        return 0.0
    return math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def naive_release(local_sum, local_p, count, sum_sensitivity, budget: PrivacyBudget,
                  u_sum, u_p):
    """Independent noise on localSum and localP under the alpha split.

    Vectorised over clients.  A zero sensitivity (a client whose only rank
    is 0) means localSum is constant and gets no noise.
    """
    eps_sum, eps_p = split_budget_naive(budget.epsilon, budget.alloc_alpha)
    sens = np.asarray(sum_sensitivity, dtype=np.float64)
    if budget.mechanism.is_gaussian:
        alpha = budget.alloc_alpha
        noise_sum = gaussian_from_uniform(
            u_sum, sens * _gaussian_multiplier(eps_sum, alpha * budget.delta))
        noise_p = gaussian_from_uniform(
            u_p, _gaussian_multiplier(eps_p, (1 - alpha) * budget.delta))
    else:
        noise_sum = laplace_from_uniform(u_sum, sens / eps_sum)
        noise_p = laplace_from_uniform(u_p, 1.0 / eps_p)
    noisy_p = local_p + noise_p
    return local_sum + noise_sum, noisy_p, count - noisy_p


def release_entries(client_id: int, budget: PrivacyBudget, beta: float | None = None
                    ) -> list[BudgetEntry]:
    """Privacy ledger rows for one client's step-3 release."""
    eps, delta = budget.epsilon, budget.delta
    if budget.mechanism is Mechanism.RR:
        return [BudgetEntry(client_id, "flip", eps)]
    if budget.mechanism.is_orthogonal:
        if beta is None or beta >= 1:
            return [BudgetEntry(client_id, "ones-channel", eps)]
        return [BudgetEntry(client_id, "ones-channel", beta * eps),
                BudgetEntry(client_id, "residual-channel", (1 - beta) * eps)]
    alpha = budget.alloc_alpha
    eps_sum, eps_p = split_budget_naive(eps, alpha)
    return [BudgetEntry(client_id, "localSum", eps_sum, alpha * delta),
            BudgetEntry(client_id, "localP", eps_p, (1 - alpha) * delta)]


def client_stats_laplace(client: ClientState, ranks, budget: PrivacyBudget,
                         rng: RngStream, total: int,
                         ledger: list[BudgetEntry] | None = None) -> StatsMessage:
    """Step 3 with additive noise; ``rng`` is the client's stream.

    ``total`` is the global sample count M, used for the GlobalLaplace
    sensitivity M - 1.
    """
    mech = budget.mechanism
    if mech is Mechanism.RR:
        raise ProtocolError("randomized response has no additive-noise step")
    ranks = _local_ranks(client, ranks)
    labels = client.labels.astype(np.int64)
    local_sum = int(np.dot(ranks, labels))
    local_p = int(labels.sum())
    beta = None
    if mech.is_orthogonal:
        decomp = orthogonal_decompose(ranks)
        if mech is Mechanism.LOCAL_LAPLACE_ADAPTIVE:
            beta = beta_star(decomp.u_inf, decomp.v_inf)
        else:
            beta = budget.alloc_beta
        beta = float(effective_beta(beta, decomp.v_inf))
        u_s1 = rng.child("localP-noise").uniform()
        u_s2 = rng.child("localSum-noise").uniform() if beta < 1 else 0.5
        noisy = orthogonal_release(local_sum, local_p, client.size, decomp.u_inf,
                                   decomp.v_inf, beta, budget.epsilon, u_s1, u_s2)
    else:
        sens = total - 1 if mech is Mechanism.GLOBAL_LAPLACE else int(ranks.max())
        u_sum = rng.child("localSum-noise").uniform()
        u_p = rng.child("localP-noise").uniform()
        noisy = naive_release(local_sum, local_p, client.size, sens, budget, u_sum, u_p)
    if ledger is not None:
        ledger.extend(release_entries(client.client_id, budget, beta))
    noisy_sum, noisy_p, noisy_n = (float(x) for x in noisy)
    return StatsMessage(client.client_id, noisy_sum, noisy_p, noisy_n)


def rank_sum_auc(global_sum: float, p_bar: float, n_bar: float) -> float:
    """Unclamped rank-sum AUC from (possibly noisy, non-integer) totals."""
    if not (p_bar > 0 and n_bar > 0):
        raise DegenerateCountsError(f"P={p_bar}, N={n_bar}: AUC undefined")
    return (global_sum - p_bar * (p_bar - 1) / 2) / (p_bar * n_bar)


def finalize_auc(global_sum: float, p_bar: float, n_bar: float,
                 mode: PNMode = PNMode.ESTIMATED, rates: NoiseRates | None = None,
                 true_counts: tuple[int, int] | None = None) -> AucValue:
    """Step 4 arithmetic on the aggregated totals.

    With ``rates`` the totals come from flipped labels and the result is
    debiased.  In oracle mode the true class counts replace the reported
    ones; for flipped labels that means their expected noisy values.
    """
    mode = PNMode(mode)
    if mode is PNMode.ORACLE:
        if true_counts is None:
            raise ProtocolError("oracle P/N mode needs the true class counts")
        p_true, n_true = true_counts
        if rates is None:
            return AucValue.clamp(rank_sum_auc(global_sum, p_true, n_true))
        p_bar = (1 - rates.rho_plus) * p_true + rates.rho_minus * n_true
        n_bar = p_true + n_true - p_bar
    if rates is None:
        return AucValue.clamp(rank_sum_auc(global_sum, p_bar, n_bar))
    noisy = rank_sum_auc(global_sum, p_bar, n_bar)
    base = estimate_base_rate(p_bar, n_bar, rates)
    result = debias_auc(noisy, base.pi_prime, rates)
    if base.clamped:
        result = AucValue(result.value, True, result.raw)
    return result


def server_aggregate(stats: Sequence[StatsMessage], k: int | None = None,
                     mode: PNMode = PNMode.ESTIMATED, rates: NoiseRates | None = None,
                     true_counts: tuple[int, int] | None = None) -> AucValue:
    """Step 4: sum the reports and evaluate the AUC."""
    ids = [s.client_id for s in stats]
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate stats report")
    if k is not None and sorted(ids) != list(range(k)):
        missing = sorted(set(range(k)) - set(ids))
        raise ProtocolError(f"stats missing from clients {missing}")
    # fsum makes the totals independent of arrival order.
    global_sum = math.fsum(s.sum for s in stats)
    p_bar = math.fsum(s.p for s in stats)
    n_bar = math.fsum(s.n for s in stats)
    return finalize_auc(global_sum, p_bar, n_bar, mode, rates, true_counts)


def run_protocol(dataset: Dataset, plan: PartitionPlan, budget: PrivacyBudget,
                 mode: PNMode | str = PNMode.ESTIMATED, rng: RngStream | None = None,
                 transport: InMemoryTransport | None = None,
                 ledger: list[BudgetEntry] | None = None
                 ) -> tuple[AucValue, list[ProtocolMessage]]:
    """Runs all four steps once.

    ``rng`` is the stream of this run (one trial); client ``c`` draws from
    ``rng.child(c)`` and its purpose-tagged children.

    Returns:
      The AUC estimate and the full message transcript.
    """
    mode = PNMode(mode)
    if len(plan.assignment) != len(dataset):
        raise InvalidInputError("partition does not match dataset size")
    rng = rng if rng is not None else RngStream(0)
    transport = transport if transport is not None else InMemoryTransport()
    clients = make_clients(dataset, plan)
    client_rngs = [rng.child(c.client_id) for c in clients]

    score_msgs = [transport.send(client_submit_scores(c, r.child("shuffle")))
                  for c, r in zip(clients, client_rngs)]
    for msg in server_rank_and_dispatch(score_msgs, plan.k):
        client_receive_ranks(clients[msg.client_id], transport.send(msg))

    if budget.mechanism is Mechanism.RR:
        stats = [client_stats_rr(c, None, budget.epsilon, r.child("flip"), ledger)
                 for c, r in zip(clients, client_rngs)]
        rates = NoiseRates.randomized_response(budget.epsilon)
    else:
        stats = [client_stats_laplace(c, None, budget, r, len(dataset), ledger)
                 for c, r in zip(clients, client_rngs)]
        rates = None
    stats = [transport.send(s) for s in stats]
    result = server_aggregate(stats, plan.k, mode, rates, (dataset.p, dataset.n))
    transport.send(ResultMessage(result.value))
    return result, list(transport.transcript)
