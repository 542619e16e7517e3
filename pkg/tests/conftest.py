from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from mrt.gateway import GatewayConfig, InteractionLog, LlmGateway, ScriptedBackend

TESTS_DIR = Path(__file__).resolve().parent
FIXTURES_DIR = TESTS_DIR / "fixtures"
STUB_WORKER = TESTS_DIR / "stub_worker.py"
STUB_CMD = [sys.executable, str(STUB_WORKER)]

sys.path.insert(0, str(FIXTURES_DIR))


@pytest.fixture(scope="session")
def stub_cmd() -> list[str]:
    return list(STUB_CMD)


@pytest.fixture
def pokemon_csv() -> Path:
    return FIXTURES_DIR / "pokemon.csv"


def scripted_gateway(replies: list[dict]) -> LlmGateway:
    """Gateway with every stage bound to an ordered-replay scripted backend."""
    return LlmGateway(
        config=GatewayConfig(),
        scripted=ScriptedBackend(replies=replies),
        log=InteractionLog(),
    )


@pytest.fixture
def make_gateway():
    return scripted_gateway


def write_csv(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def tmp_csv(tmp_path):
    def _write(text: str, name: str = "table.csv") -> Path:
        return write_csv(tmp_path / name, text)

    return _write


def materialize_e2e(tmp_path: Path) -> dict:
    """Write the scripted 20-question fixture into a temp dir: manifest,
    replay file, gold file, and a config pointing everything at temp space."""
    import e2e  # tests/fixtures/e2e.py

    table_src = (FIXTURES_DIR / "pokemon.csv").read_bytes()
    table_path = tmp_path / "pokemon.csv"
    table_path.write_bytes(table_src)

    manifest_path = tmp_path / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for record in e2e.build_manifest("pokemon.csv"):
            fh.write(json.dumps(record) + "\n")

    replay_path = tmp_path / "replay.json"
    replay_path.write_text(json.dumps(e2e.build_replay(), indent=1), encoding="utf-8")

    gold_path = tmp_path / "gold.jsonl"
    with open(gold_path, "w", encoding="utf-8") as fh:
        for record in e2e.build_gold():
            fh.write(json.dumps(record) + "\n")

    return {
        "table": table_path,
        "manifest": manifest_path,
        "replay": replay_path,
        "gold": gold_path,
    }


@pytest.fixture
def e2e_fixture(tmp_path):
    return materialize_e2e(tmp_path)
