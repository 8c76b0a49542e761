import json

import pytest

from cornerreg.cli import main


def run(capsys, *argv):
    """Exit code, the ``result`` part of the report and stderr."""
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out)["result"] if out.strip() else None), err


def test_spectra_lshape(capsys):
    code, doc, _ = run(capsys, "spectra", "lshape")
    assert code == 0
    rows = {r["id"]: r for r in doc["spectra"]}
    assert rows[0]["b"] == pytest.approx(2 / 3)
    assert rows[0]["exact"][0].startswith("-")


def test_report_provenance(capsys, tmp_path):
    report = tmp_path / "r.json"
    assert main(["--out-report", str(report), "spectra", "square"]) == 0
    capsys.readouterr()
    doc = json.loads(report.read_text())
    assert doc["command"] == "spectra"
    assert doc["provenance"]["tool"] == "cornerreg"
    assert doc["provenance"]["parameters"]["window"] == 10.0


def test_admissible_2d(capsys, tmp_path):
    code, doc, _ = run(capsys, "admissible", "lshape", "--beta", "-1.5")
    assert code == 0 and doc["verdict"] == "admissible"
    code, doc, _ = run(capsys, "admissible", "lshape", "--beta", "-1.7")
    assert code == 0 and doc["verdict"] == "inadmissible"
    report = tmp_path / "r.json"
    w = tmp_path / "w.json"
    w.write_text(json.dumps({"default": -1.2}))
    code, doc, _ = run(capsys, "--out-report", str(report), "admissible", "lshape", str(w))
    assert code == 0 and json.loads(report.read_text())["result"] == doc


def test_admissible_3d_with_known_lambda(capsys):
    lam = [f"{i}=3" for i in range(8)]
    argv = ["admissible", "cube", "--beta", "-2", "--beta-edge", "-1.5"]
    for x in lam:
        argv += ["--corner-lambda", x]
    code, doc, _ = run(capsys, *argv)
    assert code == 0 and doc["admissible"]
    assert len(doc["shift_condition"]) == 12


def test_exponents_cube(capsys):
    code, doc, _ = run(capsys, "exponents", "cube", "0", "dirichlet")
    assert code == 0
    assert doc["lambda"] == pytest.approx(3.0, abs=0.02)


def test_norms_with_corner_overrides(capsys, tmp_path):
    argv = ["norms", "lshape", "corner_singular k=1", "--beta", "-0.5", "--beta-corner", "0=-1.5",
            "-M", "5", "--csv", str(tmp_path / "s.csv")]
    code, doc, _ = run(capsys, *argv)
    assert code == 0 and doc["diverged_rows"] == 0
    assert len((tmp_path / "s.csv").read_text().strip().splitlines()) == 7


def test_norms_reports_divergence(capsys):
    code, doc, _ = run(capsys, "norms", "lshape", "corner_singular k=1", "--beta", "-1.5", "-M", "2")
    assert code == 0 and doc["diverged_rows"] >= 1
    assert "csv_text" in doc


def test_mesh_writes_files(capsys, tmp_path):
    prefix = str(tmp_path / "m")
    code, doc, _ = run(capsys, "mesh", "lshape", "--layers", "3", "--out", prefix)
    assert code == 0 and doc["cell_type"] == "triangle"
    assert sorted(doc["files"]) == [prefix + ".json", prefix + ".vtk"]
    code, doc, _ = run(capsys, "mesh", "cube", "--aniso", "--layers", "2")
    assert code == 0 and doc["cell_type"] == "hexahedron"


@pytest.mark.parametrize("argv, code", [
    (["spectra", "no_such_shape"], 3),
    (["spectra", "{bad json"], 3),
    (["norms", "lshape", "corner_singular"], 4),
    (["norms", "lshape", "blob k=1", "--beta", "-1"], 3),
    (["norms", "lshape", "corner_singular corner=1", "--beta", "-1.5"], 6),
    (["norms", "cube", "monomial a=1", "--beta", "-1"], 6),
    (["exponents", "lshape", "0", "dirichlet"], 6),
    (["mesh", "lshape", "--aniso"], 6),
])
def test_exit_codes(capsys, argv, code):
    got, doc, err = run(capsys, *argv)
    assert got == code and doc is None
    assert json.loads(err)["exit_code"] == code
