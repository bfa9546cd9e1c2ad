"""Quick end-to-end check of the trix_grid extension module."""

import json
import math
import pathlib
import tempfile

import trix_grid as tg

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def main():
    top, layers, delays = tg.simulate_sample(5, span=2, seed=1, record_grid=True)
    assert len(top) == 3 and len(layers) == 6
    assert len(delays) == 3 * (5 * 5 + 5 * 2)

    assert tg.exact_delay_pmf(2) == {0: (5, 32), 1: (11, 16), 2: (5, 32)}
    assert tg.exact_skew_pmf(1, 2) == {-1: (1, 4), 0: (1, 2), 1: (1, 4)}

    delay, skews, res = tg.sample_cone(20, [1, 3], 20000, seed=9)
    assert res == 1 and sum(delay.values()) == 20000
    mean = sum(k * c for k, c in delay.items()) / 20000
    assert abs(mean - 10.0) < 0.1, mean
    again, _, _ = tg.sample_cone(20, [1, 3], 20000, seed=9)
    assert again == delay

    eps = tg.dkw_epsilon(10**7, 0.01)
    assert abs(eps - math.sqrt(math.log(200) / 2e7)) < 1e-15
    assert abs(tg.dkw_sample_size(eps, 0.01) - 1e7) < 1.0

    rows, pooled = tg.confidence_band(delay, alpha=0.01)
    assert all(lo <= p <= hi for _, _, p, lo, hi in rows)
    est, lo, hi = tg.stddev_interval(delay)
    assert lo <= est <= hi

    counts, res, meta = tg.load_histogram(str(DATA / "skew_pmf_h2000.csv"))
    assert res == 1 and abs(sum(counts.values()) - int(meta["n"])) <= 14
    pts = tg.qq(counts, 0.0, 0.74)
    assert pts and all(a < b for (a, _), (b, _) in zip(pts, pts[1:]))

    with tempfile.TemporaryDirectory() as out:
        cfg = {"scenario": "delay-pmf", "height": 10, "samples": 5000, "seed": 3}
        report = json.loads(tg.run_experiment(json.dumps(cfg), out_dir=out))
        assert report["distributions"][0]["band"]["n"] == 5000
        assert any(p.name == "delay_h10.csv" for p in pathlib.Path(out).iterdir())

    try:
        tg.exact_delay_pmf(4)
    except tg.GuardError:
        pass
    else:
        raise AssertionError("enumeration guard did not trigger")

    print("smoke test ok")


if __name__ == "__main__":
    main()
