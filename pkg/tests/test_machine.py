import numpy as np
import pytest

from bayesim import machine
from bayesim.errors import ConfigError, DomainError, FormatError
from bayesim.machine import MachineConfig, MemoryImage


def log_image(columns, width=8):
    return MemoryImage([np.asarray(c) for c in columns], width=width, kind="log")


def lin_image(columns, width=8):
    return MemoryImage([np.asarray(c) for c in columns], width=width, kind="linear")


# ---- config ----

def test_config_presets():
    fab = machine.fabricated_config()
    assert (fab.rows, fab.columns) == (4, 4)
    assert fab.values_per_column == (8, 8, 8, 8)
    big = machine.scaled_config("stochastic", likelihood_width=16)
    assert (big.rows, big.columns) == (4, 6)
    assert big.values_per_column == (64,) * 6
    assert big.kind == "linear"


def test_config_rejects_wide_log():
    with pytest.raises(ConfigError):
        machine.fabricated_config("logarithmic", likelihood_width=16)


def test_config_rejects_bad_fields():
    with pytest.raises(ConfigError):
        machine.fabricated_config(mode="analog")
    with pytest.raises(ConfigError):
        machine.fabricated_config(cycle_budget=0)
    with pytest.raises(ConfigError):
        machine.fabricated_config(strategy="fastest")


# ---- logarithmic inference ----

def test_infer_log_example():
    img = log_image([[[4], [16]], [[8], [0]]])
    res = machine.infer_logarithmic(img, [0, 0])
    assert list(res.scores) == [12, 16]
    assert res.winner == 0
    assert res.cycles_used == 1


def test_infer_log_saturates():
    img = log_image([[[200], [0]], [[100], [0]]])
    res = machine.infer_logarithmic(img, [0, 0])
    assert res.scores[0] == 255
    assert res.winner == 1


def test_infer_log_all_zero_tie():
    img = log_image([np.zeros((3, 2), dtype=np.uint16)] * 2)
    res = machine.infer_logarithmic(img, [0, 1])
    assert list(res.scores) == [0, 0, 0]
    assert res.winner == 0  # lowest index on ties


def test_infer_log_event_counts():
    img = log_image([np.zeros((4, 8), dtype=np.uint16)] * 4)
    counts = machine.infer_logarithmic(img, [0, 0, 0, 0]).event_counts
    assert counts.mem_read_bits == 128  # 4*4*8
    assert counts.add_ops == 16
    assert counts.register_writes == 4
    assert counts.rng_draws == counts.and_compare_ops == counts.counter_increments == 0


def test_infer_log_rejects_bad_input():
    img = log_image([[[4], [16]]])
    with pytest.raises(ConfigError):
        machine.infer_logarithmic(img, [2])
    with pytest.raises(ConfigError):
        machine.infer_logarithmic(lin_image([[[4], [16]]]), [0])


# ---- stochastic inference ----

def stoch_config(**over):
    base = dict(rows=2, columns=2, values_per_column=(1, 1), mode="stochastic")
    base.update(over)
    return MachineConfig(**base)


def test_infer_stochastic_saturated_image():
    img = lin_image([np.full((3, 1), 255, dtype=np.uint16)] * 2)
    cfg = MachineConfig(rows=3, columns=2, values_per_column=(1, 1),
                        mode="stochastic", strategy="power_conscious",
                        cycle_budget=16, seed=4)
    res = machine.infer_stochastic(img, [0, 0], cfg)
    assert res.cycles_used == 1
    assert list(res.scores) == [1, 1, 1]  # every row fires at once
    assert 0 <= res.winner < 3


def test_infer_stochastic_counts_scale_with_cycles():
    img = lin_image([np.full((4, 1), 255, dtype=np.uint16)] * 4)
    cfg = MachineConfig(rows=4, columns=4, values_per_column=(1,) * 4,
                        mode="stochastic", cycle_budget=100, seed=1)
    counts = machine.infer_stochastic(img, [0] * 4, cfg).event_counts
    assert counts.rng_draws == 400  # one per column per cycle
    assert counts.and_compare_ops == 1600
    assert counts.counter_increments == 400
    assert counts.mem_read_bits == 128  # latched once
    assert counts.register_writes == 16


def test_infer_stochastic_equal_rows_balanced():
    img = lin_image([np.full((4, 1), 180, dtype=np.uint16)] * 2)
    cfg = MachineConfig(rows=4, columns=2, values_per_column=(1, 1),
                        mode="stochastic", cycle_budget=20_000, seed=77)
    res = machine.infer_stochastic(img, [0, 0], cfg)
    p = (180 / 256) ** 2
    bound = 3 * np.sqrt(p * (1 - p) / 20_000)
    for r in range(4):
        assert abs(res.scores[r] / 20_000 - p) <= 2 * bound


def test_infer_stochastic_deterministic():
    img = lin_image([np.arange(8, dtype=np.uint16).reshape(2, 4) * 30])
    cfg = MachineConfig(rows=2, columns=1, values_per_column=(4,),
                        mode="stochastic", cycle_budget=64, seed=99)
    a = machine.infer_stochastic(img, [1], cfg)
    b = machine.infer_stochastic(img, [1], cfg)
    assert np.array_equal(a.scores, b.scores)
    assert (a.winner, a.cycles_used) == (b.winner, b.cycles_used)


def test_infer_stochastic_checks_geometry():
    img = lin_image([np.zeros((2, 1), dtype=np.uint16)])
    cfg = stoch_config()  # wants 2 columns
    with pytest.raises(ConfigError):
        machine.infer_stochastic(img, [0], cfg)


# ---- fault injection ----

def test_inject_errors_zero_identity():
    img = log_image([np.arange(16, dtype=np.uint16).reshape(4, 4)])
    out = machine.inject_errors(img, 0.0, seed=3)
    assert out == img
    assert out is not img


def test_inject_errors_one_flips_all():
    img = log_image([np.arange(16, dtype=np.uint16).reshape(4, 4)])
    out = machine.inject_errors(img, 1.0, seed=3)
    assert np.array_equal(out.blocks[0], img.blocks[0] ^ 0xFF)


def test_inject_errors_rate():
    # 4*4*800*8 = 102400 bits, 3 sigma ~ 0.0047
    blocks = [np.zeros((4, 800), dtype=np.uint16) for _ in range(4)]
    img = log_image(blocks)
    out = machine.inject_errors(img, 0.5, seed=12)
    flipped = sum(int(np.bitwise_count(b.astype(np.uint32)).sum()) for b in out.blocks)
    total = 4 * 4 * 800 * 8
    assert abs(flipped / total - 0.5) <= 3 * np.sqrt(0.25 / total)


def test_inject_errors_immutability_and_validity():
    rng = np.random.default_rng(0)
    blocks = [rng.integers(0, 256, size=(4, 8), dtype=np.uint16) for _ in range(3)]
    img = log_image(blocks)
    before = [b.copy() for b in img.blocks]
    out = machine.inject_errors(img, 0.3, seed=8)
    for b, orig in zip(img.blocks, before):
        assert np.array_equal(b, orig)
    assert out.rows == img.rows and out.values_per_column == img.values_per_column
    for b in out.blocks:
        assert b.max() <= 255
    with pytest.raises(DomainError):
        machine.inject_errors(img, 1.5)


def test_inject_errors_frozen_per_seed():
    img = log_image([np.zeros((4, 64), dtype=np.uint16)])
    a = machine.inject_errors(img, 0.1, seed=5)
    b = machine.inject_errors(img, 0.1, seed=5)
    c = machine.inject_errors(img, 0.1, seed=6)
    assert a == b
    assert a != c


# ---- filter loop ----

def filter_oracle(blocks, feats, unknown_row):
    """Brute-force reference: saturating sums + argmin, winner feeds back."""
    winners = []
    prev = unknown_row
    for step in feats:
        obs = [prev] + list(step)
        scores = []
        for r in range(blocks[0].shape[0]):
            s = sum(int(blocks[c][r, obs[c]]) for c in range(len(blocks)))
            scores.append(min(s, 255))
        prev = int(np.argmin(scores))
        winners.append(prev)
    return winners


def test_run_filter_requires_prior_column():
    img = log_image([np.zeros((4, 4), dtype=np.uint16),
                     np.zeros((4, 8), dtype=np.uint16)])
    cfg = MachineConfig(rows=4, columns=2, values_per_column=(4, 8), mode="logarithmic")
    with pytest.raises(ConfigError):
        machine.run_filter(img, [[0]], unknown_row=4, config=cfg)


def test_run_filter_three_step_toy():
    # 2-state machine: column 0 is the transition column with V=3
    # (2 states + the unknown entry), sticky toward staying put
    col0 = np.array([[2, 40, 16],
                     [40, 2, 16]], dtype=np.uint16)
    col1 = np.array([[0, 30],
                     [30, 0]], dtype=np.uint16)
    img = log_image([col0, col1])
    cfg = MachineConfig(rows=2, columns=2, values_per_column=(3, 2), mode="logarithmic")
    feats = [[0], [0], [1]]
    results = machine.run_filter(img, feats, unknown_row=2, config=cfg)
    got = [r.winner for r in results]
    assert got == filter_oracle([col0, col1], feats, 2)
    # hand enumeration: step0 scores (16, 46) -> 0; step1 (2, 70) -> 0;
    # step2 (32, 40) -> 0 (sticky transition outweighs the observation)
    assert got == [0, 0, 0]


def test_run_filter_feedback_switches():
    col0 = np.array([[0, 60, 16],
                     [60, 0, 16]], dtype=np.uint16)
    col1 = np.array([[0, 90],
                     [90, 0]], dtype=np.uint16)
    img = log_image([col0, col1])
    cfg = MachineConfig(rows=2, columns=2, values_per_column=(3, 2), mode="logarithmic")
    feats = [[0], [1], [1]]  # strong observation flips the state at step 1
    results = machine.run_filter(img, feats, unknown_row=2, config=cfg)
    got = [r.winner for r in results]
    assert got == filter_oracle([col0, col1], feats, 2)
    assert got == [0, 1, 1]


def test_run_filter_sticky_absorbing():
    # self=0, other=255 transitions, non-informative observations
    col0 = np.array([[0, 255, 16],
                     [255, 0, 16]], dtype=np.uint16)
    col1 = np.full((2, 4), 20, dtype=np.uint16)
    img = log_image([col0, col1])
    cfg = MachineConfig(rows=2, columns=2, values_per_column=(3, 4), mode="logarithmic")
    feats = [[i % 4] for i in range(10)]
    winners = [r.winner for r in machine.run_filter(img, feats, unknown_row=2, config=cfg)]
    assert len(set(winners)) == 1


def test_run_filter_stochastic_deterministic_per_seed():
    col0 = np.array([[240, 10, 128],
                     [10, 240, 128]], dtype=np.uint16)
    col1 = np.array([[250, 30],
                     [30, 250]], dtype=np.uint16)
    img = lin_image([col0, col1])
    cfg = MachineConfig(rows=2, columns=2, values_per_column=(3, 2),
                        mode="stochastic", cycle_budget=64, seed=21)
    feats = [[0], [0], [1], [1]]
    a = [r.winner for r in machine.run_filter(img, feats, unknown_row=2, config=cfg)]
    b = [r.winner for r in machine.run_filter(img, feats, unknown_row=2, config=cfg)]
    assert a == b


# ---- image container ----

def test_image_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    blocks = [rng.integers(0, 256, size=(4, v), dtype=np.uint16) for v in (8, 5, 3)]
    img = log_image(blocks)
    path = tmp_path / "toy.img"
    machine.save_image(path, img)
    back = machine.load_image(path)
    assert back == img
    assert back.width == 8 and back.kind == "log"
    assert back.values_per_column == (8, 5, 3)


def test_image_round_trip_16bit():
    blocks = [np.array([[65535, 0], [1024, 7]], dtype=np.uint16)]
    img = lin_image(blocks, width=16)
    assert MemoryImage.from_bytes(img.to_bytes()) == img


def test_image_checksum_catches_corruption():
    img = log_image([np.arange(8, dtype=np.uint16).reshape(2, 4)])
    raw = bytearray(img.to_bytes())
    raw[-6] ^= 0x01  # payload byte
    with pytest.raises(FormatError):
        MemoryImage.from_bytes(bytes(raw))


def test_image_rejects_truncation_and_magic():
    img = log_image([np.arange(8, dtype=np.uint16).reshape(2, 4)])
    raw = img.to_bytes()
    with pytest.raises(FormatError):
        MemoryImage.from_bytes(raw[:10])
    with pytest.raises(FormatError):
        MemoryImage.from_bytes(b"XIMG" + raw[4:])


def test_image_code_range_enforced():
    with pytest.raises(ConfigError):
        log_image([np.array([[256]], dtype=np.uint16)])  # too wide for w=8


def test_image_text_export():
    img = log_image([np.array([[8, 16], [0, 255]], dtype=np.uint16)])
    text = img.to_text()
    assert "kind=log" in text and "width=8" in text
    assert "row 0: 8 16" in text
    assert f"checksum=0x{img.checksum:08x}" in text
