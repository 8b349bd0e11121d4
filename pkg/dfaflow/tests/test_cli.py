"""
"""
import csv
import os

from ..cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main
from ..collector import SCAN_CSV_COLUMNS
from ..harness import BENCH_CSV_COLUMNS, RUN_CSV_COLUMNS

_THIS_DRNAME = os.path.dirname(os.path.abspath(__file__))
DDRN = os.path.join(_THIS_DRNAME, "testing_data")

SMALL_RUN = """\
[traffic]
num_flows = 20
seed = 1
"""

LOSSY_RUN = """\
[fabric]
loss = 0.2
seed = 2

[traffic]
num_flows = 40
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _read_csv(path):
    with open(path) as fin:
        return list(csv.reader(fin))


def test_run_small_config_validates(tmp_path, capsys):
    out_csv = str(tmp_path / "run.csv")
    scan_csv = str(tmp_path / "scan.csv")
    fn = _write(tmp_path, SMALL_RUN)
    status = main(["run", fn, "--csv", out_csv, "--scan-csv", scan_csv])
    assert status == EXIT_OK
    assert "validated" in capsys.readouterr().out
    rows = _read_csv(out_csv)
    assert tuple(rows[0]) == RUN_CSV_COLUMNS
    assert rows[1][0] == "60"
    scan = _read_csv(scan_csv)
    assert tuple(scan[0]) == SCAN_CSV_COLUMNS
    assert len(scan) == 61


def test_run_fails_when_discrepancy_exceeds_threshold(tmp_path, capsys):
    fn = _write(tmp_path, LOSSY_RUN)
    assert main(["run", fn, "--threshold", "0"]) == EXIT_FAILED
    assert "FAILED" in capsys.readouterr().out


def test_run_usage_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.ini")]) == EXIT_USAGE
    fn = _write(tmp_path, "[traffic]\nnum_flowz = 3\n")
    assert main(["run", fn]) == EXIT_USAGE
    assert "num_flowz" in capsys.readouterr().err
    fn = _write(tmp_path, "[reporter]\nperiod_ns = 1000\n", name="short.ini")
    assert main(["run", fn]) == EXIT_USAGE


def test_missing_command_is_a_usage_error():
    assert main([]) == EXIT_USAGE
    assert main(["launch"]) == EXIT_USAGE


def test_bench_rejects_unsupported_sizes():
    assert main(["bench", "--sizes", "7"]) == EXIT_USAGE
    assert main(["bench", "--sizes", "8,x"]) == EXIT_USAGE
    assert main(["bench", "--duration", "0"]) == EXIT_USAGE


def test_bench_writes_rows(tmp_path, capsys):
    out = str(tmp_path / "bench.csv")
    args = ["bench", "--sizes", "8,16,32,64,128", "--duration", "0.1"]
    assert main(args + ["--out", out]) == EXIT_OK
    text = capsys.readouterr().out
    assert "hardware reference gdr" in text
    rows = _read_csv(out)
    assert tuple(rows[0]) == BENCH_CSV_COLUMNS
    assert [r[0] for r in rows[1:]] == ["8", "16", "32", "64", "128"]
    gbps = [float(r[2]) for r in rows[1:]]
    assert gbps == sorted(gbps)


def test_compare(tmp_path, capsys):
    out = str(tmp_path / "compare.csv")
    args = ["compare", "--duration", "0.05", "--staging-latency-us", "100"]
    assert main(args + ["--out", out]) == EXIT_OK
    assert "direct / staged" in capsys.readouterr().out
    rows = _read_csv(out)
    assert [r[0] for r in rows[1:]] == ["direct", "staged"]


def test_decode_golden_files(capsys):
    for name in ("golden_dta.hex", "golden_rocev2.hex"):
        assert main(["decode", "--file", os.path.join(DDRN, name)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "dta.flow_id" in text
    assert "0x2a" in text
    assert "frame 1" in text


def test_decode_reports_parse_errors(capsys):
    assert main(["decode", "--hex", "00" * 60]) == EXIT_FAILED
    assert "parse error: WireError" in capsys.readouterr().out
    with open(os.path.join(DDRN, "golden_dta.hex")) as fin:
        frame = [line.strip() for line in fin if not line.startswith("#")][0]
    corrupted = frame[:-4] + "ffff"
    assert main(["decode", "--hex", corrupted]) == EXIT_FAILED
    assert "parse error: BadChecksum" in capsys.readouterr().out


def test_decode_usage_errors(tmp_path):
    assert main(["decode", "--hex", "zz"]) == EXIT_USAGE
    assert main(["decode", "--file", str(tmp_path / "absent.hex")]) == EXIT_USAGE
    assert main(["decode"]) == EXIT_USAGE


def test_run_rejected_values_name_file_and_line(tmp_path, capsys):
    fn = _write(tmp_path, "# run\n\n[translator]\n\nhistory_depth = 0\n")
    assert main(["run", fn]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "{0}, line 5, [translator], history_depth".format(fn) in err
    fn = _write(tmp_path, "[collector]\ncopy_model = bogus\n", name="copy.ini")
    assert main(["run", fn]) == EXIT_USAGE
    assert "line 2, [collector], copy_model" in capsys.readouterr().err
    fn = _write(tmp_path, "[reporter]\nperiod_ns = 1000\n", name="period.ini")
    assert main(["run", fn]) == EXIT_USAGE
    assert "line 2, [reporter], period_ns" in capsys.readouterr().err
