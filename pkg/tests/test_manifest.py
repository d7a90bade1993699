import hashlib
import json

import pytest
from sqlalchemy import select

from glslimit import __version__
from glslimit.db import get_session
from glslimit.manifest import RunManifest, file_digest, manifest_path, record_run
from glslimit.models import RunRecord
from glslimit.validators import ProblemFileError


def _manifest(**overrides):
    values = dict(
        command="fig1",
        parameters={"rho_points": 11, "sigma2": [0.5, 1.0]},
        argv=["fig1", "--rho-points", "11"],
        inputs={},
        outputs=["fig1.csv"],
    )
    values.update(overrides)
    return RunManifest(**values)


def test_file_digest(tmp_path):
    path = tmp_path / "data.csv"
    path.write_bytes(b"rho,v\n0,1\n")
    assert file_digest(path) == hashlib.sha256(b"rho,v\n0,1\n").hexdigest()


def test_manifest_path():
    assert manifest_path("out/fig1.csv").name == "fig1.csv.manifest.json"


def test_manifest_save_and_load(tmp_path):
    manifest = _manifest()
    path = manifest.save(tmp_path / "fig1.csv.manifest.json")
    loaded = RunManifest.load(path)
    assert loaded == manifest
    assert loaded.version == __version__
    assert json.loads(path.read_text(encoding="utf-8"))["argv"] == ["fig1", "--rho-points", "11"]


def test_manifest_missing_field(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"command": "fig1", "parameters": {}}), encoding="utf-8")
    with pytest.raises(ProblemFileError) as info:
        RunManifest.load(path)
    assert info.value.field == "argv"


def test_record_run_disabled():
    assert record_run(_manifest(), None) is None
    assert record_run(_manifest(), "") is None


def test_record_run_sqlite(tmp_path):
    url = f"sqlite:///{tmp_path / 'runs.sqlite3'}"
    first = record_run(_manifest(), url)
    second = record_run(_manifest(command="analyze", inputs={"p.json": "abc"}, exit_code=0), url)
    assert first is not None and second == first + 1

    with get_session() as session:
        records = session.scalars(select(RunRecord).order_by(RunRecord.id)).all()
    assert [record.command for record in records] == ["fig1", "analyze"]
    assert records[0].parameters["rho_points"] == 11
    assert records[1].input_digests == {"p.json": "abc"}
    assert records[0].created_at is not None
