import gzip
import io

import numpy as np
import pytest

from dpgossip.data import (
    DataFormatError, LabeledExample, SyntheticModel, generate_stream, make_example, normalize,
    parse_libsvm, read_libsvm, take, write_libsvm,
)


def test_parse_examples():
    (ex,) = parse_libsvm(["+1 1:0.5 3:0.5"], 4)
    assert ex.y == 1
    np.testing.assert_array_equal(ex.dense(4), [0.5, 0, 0.5, 0])
    (ex,) = parse_libsvm(["-1"], 4)
    assert ex.y == -1 and not ex.dense(4).any()


def test_parse_label_mapping_and_comments():
    exs = list(parse_libsvm(["0 2:1", "# comment", "", "3 1:1", "-0.5 1:1  # trailing"], 2))
    assert [e.y for e in exs] == [-1, 1, -1]
    assert [e.id for e in exs] == [0, 1, 2]


@pytest.mark.parametrize("line, lineno", [
    ("+1 5:1", 2),        # index > n
    ("+1 0:1", 2),        # 0 is not a valid 1-based index
    ("+1 2:1 1:1", 2),    # not increasing
    ("+1 1:x", 2),
    ("abc 1:1", 2),
    ("+1 1-1", 2),
])
def test_parse_errors_report_line(line, lineno):
    with pytest.raises(DataFormatError) as err:
        list(parse_libsvm(["+1 1:1", line], 4))
    assert err.value.lineno == lineno


def test_round_trip(tmp_path):
    model = SyntheticModel(50, 5, 8, noise_rate=0.1, seed=3)
    stream = generate_stream(model, 300, seed=4)
    buf = io.StringIO()
    write_libsvm(stream, buf)
    back = list(parse_libsvm(buf.getvalue().splitlines(), 50))
    assert back == stream
    path = tmp_path / "s.svm.gz"
    with gzip.open(path, "wt") as fh:
        write_libsvm(stream, fh)
    assert read_libsvm(path, 50) == stream


def test_normalize():
    (a, b) = normalize([make_example(np.array([3.0, 4.0]), 1, 0), make_example(np.zeros(2), -1, 1)])
    np.testing.assert_allclose(a.dense(2), [0.6, 0.8])
    assert not b.dense(2).any()
    rng = np.random.default_rng(0)
    raw = [make_example(rng.normal(size=6) * rng.uniform(0.1, 10), 1, i) for i in range(200)]
    assert max(e.norm for e in normalize(raw)) == pytest.approx(1.0, abs=1e-12)


def test_generator_contract():
    model = SyntheticModel(100, 5, 10, noise_rate=0.0, seed=1)
    assert np.count_nonzero(model.w_true) == 5
    stream = generate_stream(model, 2000, seed=2)
    assert all(e.y * e.dot(model.w_true) > 0 for e in stream)
    assert all(e.indices.size == 10 and abs(e.norm - 1) < 1e-12 for e in stream)
    assert len({e.id for e in stream}) == 2000
    assert generate_stream(model, 0, seed=2) == []
    assert generate_stream(model, 50, seed=2) == stream[:50]


def test_generator_is_deterministic():
    model = SyntheticModel(40, 4, 6, noise_rate=0.2, seed=9)
    a, b = generate_stream(model, 100, 5), generate_stream(model, 100, 5)
    assert all(np.array_equal(x.values, y.values) and x.y == y.y for x, y in zip(a, b))
    assert generate_stream(model, 100, 6) != a


def test_noise_rate_fraction():
    model = SyntheticModel(200, 10, 20, noise_rate=0.1, seed=0)
    stream = generate_stream(model, 100_000, seed=0)
    flipped = np.mean([e.y * e.dot(model.w_true) < 0 for e in stream])
    assert 0.094 <= flipped <= 0.106


def test_generator_rejects_bad_sizes():
    with pytest.raises(ValueError):
        SyntheticModel(10, 2, 11)
    with pytest.raises(ValueError):
        SyntheticModel(10, 11, 2)


def test_example_invariants():
    with pytest.raises(ValueError):
        LabeledExample(np.array([2, 1]), np.array([1.0, 1.0]), 1, 0)
    with pytest.raises(ValueError):
        LabeledExample(np.array([0]), np.array([1.0]), 0, 0)


def test_take():
    s = generate_stream(SyntheticModel(10, 2, 3, seed=0), 5, 0)
    assert take(iter(s), 3) == s[:3]
    with pytest.raises(ValueError):
        take(iter(s), 6)
