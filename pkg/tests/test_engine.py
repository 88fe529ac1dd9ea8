import random

import pytest

from dctwin.dataloader import WorkloadSet, clip_to_window, load_canonical
from dctwin.engine import Engine, run
from dctwin.model import BoundaryFlag, SimWindow, SystemConfig
from dctwin.resource_manager import NodeConflict

from .conftest import TOY_WORKLOAD, make_job


def workload(jobs):
    ordered = tuple(sorted(jobs, key=lambda j: (j.submit, j.id)))
    hi = max((j.end if j.end is not None else j.submit + j.wall_limit) for j in jobs)
    return WorkloadSet(ordered, SimWindow(0, hi))


def test_initialize_empty_system(config4):
    clipped = clip_to_window(workload([make_job(1, submit=100, wall=10)]), SimWindow(0, 50))
    eng = Engine(config4, clipped, SimWindow(0, 50), "fcfs")
    assert eng.now == 0 and eng.pool.free_count == 4 and not eng.running


def test_initialize_prepopulates_recorded_nodes(config4):
    job = make_job(1, submit=0, start=5, end=50, wall=60, nodes=2, assigned=[0, 1])
    clipped = clip_to_window(workload([job]), SimWindow(20, 100))
    eng = Engine(config4, clipped, SimWindow(20, 100), "fcfs")
    rj = eng.running[1]
    assert rj.nodes == (0, 1)
    assert rj.sim_end == 50  # 30 s remaining past the window start
    assert rj.job.boundary_flag is BoundaryFlag.STARTED_BEFORE_WINDOW


def test_initialize_prepopulation_conflict_aborts(config4):
    a = make_job(1, submit=0, start=0, end=50, wall=60, nodes=1, assigned=[0])
    b = make_job(2, submit=0, start=2, end=60, wall=60, nodes=1, assigned=[0])
    clipped = clip_to_window(workload([a, b]), SimWindow(20, 100))
    with pytest.raises(NodeConflict):
        Engine(config4, clipped, SimWindow(20, 100), "fcfs")


def test_step_empty_system_power_floor(config4):
    clipped = clip_to_window(workload([make_job(1, submit=999, wall=5)]), SimWindow(0, 10))
    eng = Engine(config4, clipped, SimWindow(0, 10), "fcfs")
    eng.step()
    snap = eng.ticks[0].snapshot
    assert snap.utilization == 0.0
    assert snap.facility_watts == pytest.approx(4 * 200.0 / 0.95, rel=1e-12)


def test_step_starts_queued_job(config4):
    clipped = clip_to_window(workload([make_job(1, submit=0, nodes=1, wall=10)]), SimWindow(0, 20))
    eng = Engine(config4, clipped, SimWindow(0, 20), "fcfs")
    eng.step()
    assert len(eng.running) == 1 and eng.running[1].sim_start == 0


def test_step_strict_eligibility(config4):
    clipped = clip_to_window(workload([make_job(1, submit=1, nodes=1, wall=10)]), SimWindow(0, 20))
    eng = Engine(config4, clipped, SimWindow(0, 20), "fcfs")
    eng.step()  # now=0: submit=1 is in the future
    assert not eng.running and not eng.queue
    eng.step()  # now=1
    assert 1 in eng.running


def test_run_window_length_zero(config4):
    clipped = clip_to_window(workload([make_job(1, wall=5)]), SimWindow(0, 0))
    out = Engine(config4, clipped, SimWindow(0, 0), "fcfs").run()
    assert out.ticks == [] and out.records == [] and out.valid


def test_run_three_job_fcfs_hand_schedule(config4):
    jobs = [
        make_job(1, submit=0, nodes=2, wall=10),
        make_job(2, submit=0, nodes=2, wall=10),
        make_job(3, submit=0, nodes=4, wall=10),
    ]
    out = run(config4, workload(jobs), SimWindow(0, 30), "fcfs", "none")
    assert out.start_times() == {1: 0, 2: 0, 3: 10}
    ends = {r.job.id: r.end for r in out.records}
    assert max(ends.values()) == 20  # makespan


def test_run_is_deterministic(config4):
    jobs = [make_job(i, submit=i % 3, nodes=1 + i % 2, wall=7 + i, util=0.5) for i in range(1, 8)]
    a = run(config4, workload(jobs), SimWindow(0, 100), "fcfs", "easy")
    b = run(config4, workload(jobs), SimWindow(0, 100), "fcfs", "easy")
    assert a.start_times() == b.start_times()
    assert [t.snapshot for t in a.ticks] == [t.snapshot for t in b.ticks]
    assert a.report == b.report


def test_monotone_clock_and_row_count(config4):
    jobs = [make_job(1, submit=0, nodes=1, wall=10)]
    out = run(config4, workload(jobs), SimWindow(0, 25), "fcfs")
    times = [t.snapshot.t for t in out.ticks]
    assert times == list(range(25))
    assert all(b - a == 1 for a, b in zip(times, times[1:]))


def test_conservation_of_jobs(config4):
    rng = random.Random(11)
    jobs = [
        make_job(i + 1, submit=rng.randint(0, 30), nodes=rng.randint(1, 4),
                 wall=rng.randint(1, 15))
        for i in range(12)
    ]
    clipped = clip_to_window(workload(jobs), SimWindow(0, 200))
    eng = Engine(config4, clipped, SimWindow(0, 200), "fcfs", "easy")
    total = len(jobs)
    while eng.now < eng.window.end:
        eng.step()
        in_flight = (len(eng.pending) - eng._pending_idx) + len(eng.queue) + len(eng.running)
        assert in_flight + len(eng.records) == total


def test_no_precompute_start_never_before_submit(config4):
    rng = random.Random(23)
    for trial in range(20):
        jobs = [
            make_job(i + 1, submit=rng.randint(0, 40), nodes=rng.randint(1, 4),
                     wall=rng.randint(1, 10))
            for i in range(8)
        ]
        out = run(config4, workload(jobs), SimWindow(0, 300), "sjf", "first-fit")
        by_id = {j.id: j for j in jobs}
        for job_id, start in out.start_times().items():
            assert start >= by_id[job_id].submit


def test_backfill_head_delay_scenario(config4):
    """4 nodes; A(3n) runs 100..110; B(4n), C(1n,8s), D(1n,15s) submit at 100."""
    a = make_job(100, submit=0, start=100, end=110, wall=10, nodes=3)
    b = make_job(1, submit=100, nodes=4, wall=20)
    c = make_job(2, submit=100, nodes=1, wall=8)
    d = make_job(3, submit=100, nodes=1, wall=15)
    ws = workload([a, b, c, d])
    window = SimWindow(100, 400)

    none_out = run(config4, ws, window, "fcfs", "none")
    easy_out = run(config4, ws, window, "fcfs", "easy")
    ff_out = run(config4, ws, window, "fcfs", "first-fit")

    assert none_out.start_times() == {100: 100, 1: 110, 2: 130, 3: 130}
    assert easy_out.start_times() == {100: 100, 1: 110, 2: 100, 3: 130}
    # first-fit famously delays the wide head job behind backfilled strays
    assert ff_out.start_times() == {100: 100, 2: 100, 3: 108, 1: 123}
    assert easy_out.first_reservations[1] == 110
    assert easy_out.start_times()[1] <= easy_out.first_reservations[1]


def test_replay_reproduces_recorded_schedule():
    ws = load_canonical(TOY_WORKLOAD)
    cfg = SystemConfig(total_nodes=8, timestep=15)
    out = run(cfg, ws, SimWindow(0, 1200), "replay")
    assert out.valid
    for record in out.records:
        assert record.start == record.job.start
        assert record.end == record.job.end


def test_replay_utilization_matches_interval_counting():
    ws = load_canonical(TOY_WORKLOAD)
    cfg = SystemConfig(total_nodes=8, timestep=15)
    out = run(cfg, ws, SimWindow(0, 1200), "replay")
    jobs = ws.jobs
    for row in out.ticks:
        t = row.snapshot.t
        occupied = sum(j.nodes_requested for j in jobs if j.start <= t < j.end)
        assert row.snapshot.utilization == pytest.approx(occupied / 8)


def test_window_end_truncation_flags_unfinished(config4):
    jobs = [make_job(1, submit=0, nodes=1, wall=100)]
    out = run(config4, workload(jobs), SimWindow(0, 20), "fcfs")
    (record,) = out.records
    assert not record.finished
    assert record.end == 20
    assert record.job.boundary_flag is BoundaryFlag.ENDS_AFTER_WINDOW
    assert out.report.completed_jobs == 0 and out.report.unfinished_jobs == 1


def test_rescheduled_duration_truncated_at_wall_limit(config4):
    # recorded runtime 50 exceeds the 20 s wall limit: reschedule truncates
    jobs = [make_job(1, submit=0, start=0, end=50, wall=20, nodes=1)]
    out = run(config4, workload(jobs), SimWindow(0, 100), "fcfs")
    (record,) = out.records
    assert record.end - record.start == 20


def test_energy_floor_and_ceiling(config4):
    jobs = [make_job(i, submit=0, nodes=1, wall=30, util=1.0) for i in range(1, 5)]
    out = run(config4, workload(jobs), SimWindow(0, 60), "fcfs")
    lo = 4 * 200.0 / 0.95
    hi = 4 * 1000.0 / 0.95
    for row in out.ticks:
        assert lo - 1e-9 <= row.snapshot.facility_watts <= hi + 1e-9


def test_invalid_output_flagged_on_error(config4):
    # two replay jobs claim the same node at overlapping times
    a = make_job(1, submit=0, start=0, end=30, wall=30, nodes=1, assigned=[0])
    b = make_job(2, submit=0, start=10, end=40, wall=40, nodes=1, assigned=[0])
    out = run(config4, workload([a, b]), SimWindow(0, 60), "replay")
    assert not out.valid
    assert out.error_kind == "runtime"
    assert "job 1" in out.error and "job 2" in out.error


def test_scalar_util_drives_power(config4_lossless):
    jobs = [make_job(1, submit=0, nodes=1, wall=10, util=0.5)]
    out = run(config4_lossless, workload(jobs), SimWindow(0, 5), "fcfs")
    # one node at 600 W + three idle at 200 W
    assert out.ticks[0].snapshot.compute_watts == pytest.approx(600.0 + 3 * 200.0)


def test_report_definitional_identities(config4):
    jobs = [make_job(i, submit=0, nodes=1, wall=10, util=0.5, account=f"acct{i % 2}")
            for i in range(1, 5)]
    out = run(config4, workload(jobs), SimWindow(0, 3600), "fcfs", collect_accounts=True)
    report = out.report
    window_hours = 3600 / 3600.0
    assert report.throughput_jobs_per_hour * window_hours == report.completed_jobs
    job_energy = sum(r.energy_j for r in out.records if r.finished)
    account_energy = sum(a.total_energy for a in report.per_account.values())
    assert account_energy == pytest.approx(job_energy, rel=1e-12)
    assert report.power_efficiency == pytest.approx(0.95, rel=1e-12)
    turnarounds = [r.stats.turnaround for r in out.records if r.finished]
    assert min(turnarounds) <= report.awrt_s <= max(turnarounds)
    assert sum(report.size_histogram.values()) == report.completed_jobs
