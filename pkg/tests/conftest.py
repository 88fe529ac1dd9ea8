import os

import pytest

from dctwin.model import Job, JobTimes, SystemConfig

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
WORKLOADS_DIR = os.path.join(REPO_ROOT, "workloads")
CONFIGS_DIR = os.path.join(REPO_ROOT, "configs")

TOY_WORKLOAD = os.path.join(WORKLOADS_DIR, "toy.csv")
CONGESTED_WORKLOAD = os.path.join(WORKLOADS_DIR, "congested.csv")
REPLAY50_WORKLOAD = os.path.join(WORKLOADS_DIR, "replay50.csv")
TOY_CONFIG = os.path.join(CONFIGS_DIR, "toy8.cfg")
SYNTH_CONFIG = os.path.join(CONFIGS_DIR, "synthetic16.cfg")


def make_job(
    job_id,
    submit=0,
    nodes=1,
    wall=10,
    start=None,
    end=None,
    account="acct",
    priority=0,
    assigned=None,
    util=None,
    trace=None,
    score=None,
):
    return Job(
        id=job_id,
        account_id=account,
        times=JobTimes(submit=submit, start=start, end=end, wall_limit=wall),
        nodes_requested=nodes,
        nodes_assigned=tuple(assigned) if assigned is not None else None,
        priority=priority,
        trace=trace,
        scalar_avg_util=util,
        score=score,
    )


@pytest.fixture
def config4():
    return SystemConfig(total_nodes=4, timestep=1)


@pytest.fixture
def config4_lossless():
    return SystemConfig(total_nodes=4, timestep=1, conversion_efficiency=1.0)
