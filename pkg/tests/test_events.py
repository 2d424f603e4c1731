import numpy as np
import pytest
from scipy import stats

from sisenet.events import (
    DemographyConfig,
    EventError,
    EventFormatError,
    EventRecord,
    EventStream,
    apply_event,
    generate_synthetic_events,
    parse_events,
    read_population,
    write_events,
    write_population,
)
from sisenet.simulator import NetworkState


def state(S, I):
    return NetworkState(S, I, np.zeros(len(S)))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(time=0, kind="enter", src=1, dst=None),
        dict(time=0, kind="exit", src=None, dst=1),
        dict(time=0, kind="transfer", src=1, dst=1),
        dict(time=0, kind="transfer", src=1, dst=None),
        dict(time=-1, kind="enter", src=None, dst=1),
        dict(time=0, kind="enter", src=None, dst=1, count=0),
        dict(time=0, kind="birth", src=None, dst=1),
    ],
)
def test_event_record_validation(kwargs):
    with pytest.raises(EventFormatError):
        EventRecord(**kwargs)


def test_enter_exit_transfer_counts():
    st = state([5, 0], [3, 0])
    rng = np.random.default_rng(0)
    apply_event(st, EventRecord(0, "enter", None, 1, 4), rng)
    assert (st.S[1], st.I[1]) == (4, 0)
    apply_event(st, EventRecord(0, "transfer", 0, 1, 8), rng)
    assert (st.S[0], st.I[0]) == (0, 0)
    assert (st.S[1], st.I[1]) == (9, 3)
    apply_event(st, EventRecord(0, "exit", 1, None, 12), rng)
    assert st.population() == 0


def test_exit_draw_is_hypergeometric():
    rng = np.random.default_rng(5)
    reps = 20000
    removed_infected = np.empty(reps, dtype=int)
    for r in range(reps):
        st = state([7], [5])
        apply_event(st, EventRecord(0, "exit", 0, None, 4), rng)
        removed_infected[r] = 5 - st.I[0]
    freq = np.bincount(removed_infected, minlength=5) / reps
    expected = stats.hypergeom.pmf(np.arange(5), 12, 5, 4)
    np.testing.assert_allclose(freq, expected, atol=0.01)


def test_transfer_keeps_state_unless_cleared():
    rng = np.random.default_rng(1)
    st = state([0, 0], [4, 0])
    apply_event(st, EventRecord(0, "transfer", 0, 1, 2), rng)
    assert st.I[1] == 2
    apply_event(st, EventRecord(0, "transfer", 0, 1, 2), rng, clear_on_arrival=True)
    assert (st.S[1], st.I[1]) == (2, 2)
    assert st.population() == 4


def test_underflow_strict_and_clamp():
    rng = np.random.default_rng(2)
    st = state([1], [1])
    with pytest.raises(EventError) as err:
        apply_event(st, EventRecord(3, "exit", 0, None, 5), rng)
    assert err.value.node == 0 and err.value.time == 3
    apply_event(st, EventRecord(3, "exit", 0, None, 5), rng, mode="clamp")
    assert st.population() == 0


def test_phi_untouched_by_events():
    st = NetworkState([3, 3], [3, 3], [0.7, 0.2])
    apply_event(st, EventRecord(0, "transfer", 0, 1, 3), np.random.default_rng(0))
    np.testing.assert_array_equal(st.phi, [0.7, 0.2])


def test_stream_sorts_stably():
    recs = [EventRecord(5, "enter", None, 0), EventRecord(1, "exit", 0, None), EventRecord(1, "enter", None, 1)]
    s = EventStream.from_records(recs)
    assert list(s.time) == [1, 1, 5]
    assert [r.kind for r in s] == ["exit", "enter", "enter"]
    assert s.window(1, 2) == slice(0, 2)
    assert s.totals() == {"enter": 2, "exit": 1, "transfer": 0}


def test_csv_roundtrip(tmp_path):
    stream = generate_synthetic_events(10, 1, rng=np.random.default_rng(4))
    write_events(stream, tmp_path / "ev.csv")
    back = parse_events(tmp_path / "ev.csv", node_count=10)
    for col in ("time", "kind", "src", "dst", "count"):
        np.testing.assert_array_equal(getattr(back, col), getattr(stream, col))
    write_population(stream.initial_population, tmp_path / "pop.csv")
    np.testing.assert_array_equal(read_population(tmp_path / "pop.csv"), stream.initial_population)


def test_parse_reports_line_numbers(tmp_path):
    path = tmp_path / "ev.csv"
    path.write_text("time,kind,src,dst,count\n0,enter,,1,1\n1,exit,,2,1\n")
    with pytest.raises(EventFormatError) as err:
        parse_events(path)
    assert err.value.line == 3
    path.write_text("time,kind,src,dst,count\n0,enter,,1\n")
    with pytest.raises(EventFormatError) as err:
        parse_events(path)
    assert err.value.line == 2
    path.write_text("when,what\n")
    with pytest.raises(EventFormatError):
        parse_events(path)


def test_parse_sorts_unsorted_rows(tmp_path, caplog):
    path = tmp_path / "ev.csv"
    path.write_text("time,kind,src,dst,count\n4,enter,,1,1\n2,enter,,0,3\n")
    s = parse_events(path)
    assert list(s.time) == [2, 4]
    assert "sorting" in caplog.text


def test_generator_is_deterministic_and_consistent():
    a = generate_synthetic_events(50, 2, rng=np.random.default_rng(9))
    b = generate_synthetic_events(50, 2, rng=np.random.default_rng(9))
    np.testing.assert_array_equal(a.time, b.time)
    np.testing.assert_array_equal(a.src, b.src)
    # replaying strictly never underflows
    pop = a.initial_population.copy()
    for r in a:
        if r.kind == "enter":
            pop[r.dst] += r.count
        else:
            pop[r.src] -= r.count
            assert pop[r.src] >= 0
            if r.kind == "transfer":
                pop[r.dst] += r.count


def test_generator_rates():
    cfg = DemographyConfig()
    s = generate_synthetic_events(400, 2, cfg, np.random.default_rng(3))
    counts = s.event_counts()
    expected_enter = 400 * 2 * cfg.enter_rate
    assert counts["enter"] == pytest.approx(expected_enter, rel=0.03)
    assert counts["transfer"] == pytest.approx(400 * 2 * cfg.transfer_rate, rel=0.03)
    assert s.initial_population.mean() == pytest.approx(cfg.mean_herd_size, rel=0.15)


def test_generator_rejects_bad_sizes():
    with pytest.raises(ValueError):
        generate_synthetic_events(1, 1)
    with pytest.raises(ValueError):
        DemographyConfig(amplitude=2.0)
