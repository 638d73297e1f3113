import csv
import shutil
import textwrap

import pytest

from xva_engine import cli
from xva_engine.engine import NumericalError
from xva_engine.marketdata import default_data_dir


def write_cfg(tmp_path, body, name="run.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(body))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


SMALL = """
[instrument.1]
menu = swap_15Y_OTM

[instrument.2]
menu = swaption_5x10_OTM_pay

[csa]
schemes = none, vm, vm_im

[calc]
n_mc = 40
dt = 12M
grid = joint
n_nodes = 32
"""


def test_price_subcommand(tmp_path):
    cfg = write_cfg(tmp_path, """
        [instrument.1]
        menu = swap_15Y_ATM
        [instrument.2]
        type = swaption
        tenor_months = 120
        start_months = 60
        strike = atm
        [instrument.3]
        type = swap
        tenor_months = 36
        strike = 0.01
        omega = receiver
        notional = 1e6
        """)
    assert cli.main(["price", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "prices.csv")
    assert rows[0] == ["instrument", "kind", "strike", "par_rate", "price_curves", "price_g2pp"]
    assert [r[0] for r in rows[1:]] == ["swap_15Y_ATM", "2", "3"]
    swap = rows[1]
    assert float(swap[4]) == pytest.approx(float(swap[5]), rel=1e-9)
    assert float(rows[2][5]) == pytest.approx(5_030_423, rel=0.01)


def test_xva_menu_shape_and_headers(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    out = tmp_path / "o"
    assert cli.main(["xva", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "xva_summary.csv")
    assert rows[0] == cli.SUMMARY_HEADER
    assert len(rows) == 1 + 2 * 3
    for r in rows[1:]:
        cva, lb, ub, dva = float(r[2]), float(r[3]), float(r[4]), float(r[5])
        assert cva <= 0 <= dva
        assert lb <= cva <= ub
    for name in ("swap_15Y_OTM", "swaption_5x10_OTM_pay"):
        for scheme in cli.SCHEMES:
            prof = read_csv(out / f"exposure_{name}_{scheme}.csv")
            assert prof[0] == cli.EXPOSURE_HEADER
            assert prof[1][0] == "0"


def test_reruns_are_identical(tmp_path):
    cfg = write_cfg(tmp_path, SMALL.replace("swaption_5x10_OTM_pay", "swap_15Y_ITM") + "\n[output]\ntimings = no\n")
    for d in ("a", "b"):
        assert cli.main(["xva", "--config", str(cfg), "--out", str(tmp_path / d), "--threads", "2"]) == 0
    for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_seed_changes_results(tmp_path):
    cfg = write_cfg(tmp_path, "[instrument.1]\nmenu = swap_15Y_ATM\n[calc]\nn_mc = 30\ndt = 12M\n")
    cli.main(["xva", "--config", str(cfg), "--out", str(tmp_path / "a")])
    cli.main(["xva", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "7"])
    a = read_csv(tmp_path / "a" / "xva_summary.csv")[1]
    b = read_csv(tmp_path / "b" / "xva_summary.csv")[1]
    assert a[2] != b[2]


def test_empty_instrument_list_is_a_no_op(tmp_path):
    cfg = write_cfg(tmp_path, "[calc]\nn_mc = 10\n")
    assert cli.main(["xva", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert read_csv(tmp_path / "o" / "xva_summary.csv") == [cli.SUMMARY_HEADER]


@pytest.mark.parametrize("body,fragment", [
    ("[calc]\ndt = 2W\n", "[calc] dt"),
    ("[calc]\nn_mc = many\n", "[calc] n_mc"),
    ("[instrument.1]\nmenu = swap_99Y\n", "[instrument.1] menu"),
    ("[instrument.1]\ntype = cap\n", "[instrument.1] type"),
    ("[csa]\nschemes = full\n", "[csa] schemes"),
    ("[weird]\nx = 1\n", "[weird]"),
    ("[market]\ndata_dir = /nonexistent\n", "[market] data_dir"),
    ("[calc]\nlgd_cpty = 1.5\n", "[calc] lgd_cpty"),
])
def test_config_errors_exit_1(tmp_path, capsys, body, fragment):
    cfg = write_cfg(tmp_path, body)
    assert cli.main(["xva", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert fragment in capsys.readouterr().err


def test_missing_config_exits_1(tmp_path):
    assert cli.main(["price", "--config", str(tmp_path / "nope.ini")]) == 1


def test_numerical_failure_exits_2(tmp_path, monkeypatch, capsys):
    def boom(run):
        raise NumericalError("implied vol failed on path 3, step 17")

    monkeypatch.setitem(cli.COMMANDS, "price", boom)
    cfg = write_cfg(tmp_path, "[instrument.1]\nmenu = swap_15Y_ATM\n")
    assert cli.main(["price", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "path 3, step 17" in capsys.readouterr().err


def test_data_dir_from_environment(tmp_path, monkeypatch):
    data = tmp_path / "data"
    shutil.copytree(default_data_dir(), data)
    monkeypatch.setenv("XVA_ENGINE_DATA", str(data))
    cfg = write_cfg(tmp_path, "[instrument.1]\nmenu = swap_15Y_ATM\n")
    assert cli.main(["price", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    (data / "curves" / "d.csv").unlink()
    assert cli.main(["price", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_params_json_round_trip(tmp_path):
    import json

    from xva_engine.g2pp import PUBLISHED_PARAMS

    pj = tmp_path / "p.json"
    pj.write_text(json.dumps(PUBLISHED_PARAMS.as_dict()))
    cfg = write_cfg(tmp_path, f"[market]\nparams = {pj}\n[instrument.1]\nmenu = swaption_5x10_ATM\n")
    assert cli.main(["price", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert float(read_csv(tmp_path / "o" / "prices.csv")[1][5]) == pytest.approx(5_030_423, rel=0.01)
    pj.write_text("{}")
    assert cli.main(["price", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_convergence_ava_and_audit_outputs(tmp_path):
    cfg = write_cfg(tmp_path, """
        [instrument.1]
        menu = swap_15Y_ATM
        [calc]
        n_mc = 60
        dt = 12M
        n_ladder = 30, 60, 120
        ladder_grids = 12M:joint
        ava_n = 20, 40
        ava_grids = 6M:standard
        ava_analytical = g2pp
        audit_paths = 2
        audit_steps = 3
        """)
    out = tmp_path / "o"
    for sub in ("convergence", "ava", "simm-audit"):
        assert cli.main([sub, "--config", str(cfg), "--out", str(out)]) == 0, sub
    conv = read_csv(out / "convergence.csv")
    assert [r[2] for r in conv[1:]] == ["30", "60", "120"]
    assert float(conv[-1][11]) == 0.0
    ava = read_csv(out / "ava_summary.csv")
    assert ava[0][-1] == "ava"
    # 20, 40, 60 on the main grid, 60 on the extra grid, two analytical strips
    assert ava[1][2] == "6"
    roles = [r[-1] for r in read_csv(out / "ava_swap_15Y_ATM_none.csv")[1:]]
    assert roles.count("target") == 1 and roles.count("prudent") == 1
    audit = read_csv(out / "simm_audit.csv")
    assert audit[0] == ["instrument", "path", "step", "tenor", "curve", "delta_eur_bp", "vr_eur", "cvr_eur"]
    assert {r[1] for r in audit[1:]} == {"-1", "0", "1"}
