"""Account-based priorities: redeeming accumulated behavior as queue rank."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .model import Account

ACCOUNT_POLICIES = ("acct_avg_power", "acct_low_avg_power", "acct_edp", "acct_fugaku_pts")

# sort key per policy; reverse=True means larger metric ranks first
_SORT_RULES = {
    "acct_avg_power": (lambda a: a.avg_power, True),
    "acct_low_avg_power": (lambda a: a.avg_power, False),
    "acct_edp": (lambda a: a.accumulated_edp, False),
    "acct_fugaku_pts": (lambda a: a.fugaku_points, True),
}


@dataclass(frozen=True, slots=True)
class IncentiveRanking:
    """Dense priorities 1..N per account; higher schedules earlier."""

    policy: str
    priorities: dict[str, int]

    def priority_of(self, account_id: str) -> int:
        """Rank of a known account; accounts never seen before rank 0."""
        return self.priorities.get(account_id, 0)


def derive_priorities(policy: str, accounts: Mapping[str, Account]) -> IncentiveRanking:
    """Rank accounts by the policy's metric and assign dense priorities N..1.

    Only the relative order of the metric matters, so scaling every
    account's metric by a positive constant leaves the ranking unchanged.
    Ties break on account id for determinism. An empty account map yields
    an empty ranking: every job falls back to priority 0 (plain FCFS).
    """
    if policy not in _SORT_RULES:
        raise ValueError(f"not an account policy: {policy}")
    key, reverse = _SORT_RULES[policy]
    ordered = sorted(accounts.values(), key=lambda a: a.account_id)
    ordered.sort(key=key, reverse=reverse)
    n = len(ordered)
    return IncentiveRanking(policy, {a.account_id: n - i for i, a in enumerate(ordered)})


def earn_fugaku_points(account: Account, job_stats, reference_power: float) -> float:
    """Points after crediting one job: frugal jobs gain, hungry jobs lose.

    A job drawing exactly reference_power per node earns nothing; one at
    half the reference earns half a point per node-hour; one at double
    loses a full point per node-hour.
    """
    if reference_power <= 0:
        raise ValueError("reference_power must be > 0")
    nodes = round(job_stats.node_seconds / job_stats.runtime)
    node_hours = job_stats.node_seconds / 3600.0
    delta = (reference_power * nodes - job_stats.avg_power) / reference_power * node_hours
    return account.fugaku_points + delta
