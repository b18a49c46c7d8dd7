from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel

from lca.buffers.episode_log import append_entries, entry_from_episode
from lca.buffers.records import EpisodeRecord
from lca.graph.trainer import METRICS_HEADER, RoundMetrics
from lca.llm.schemas import Curriculum
from lca.policy.checkpoint import save_params
from lca.policy.network import PolicyParams
from lca.semantics.oracle import DEFAULT_ORACLE, OracleConfig, detect_achieved


logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
EPISODES_FILE = "episodes.jsonl"
POLICY_FILE = "policy.bin"


class ArtifactWriter:
    """Writes a run's files under one directory; every path is relative to ``root``."""

    def __init__(self, root: Union[str, Path], oracle: OracleConfig = DEFAULT_ORACLE) -> None:
        self.root = Path(root)
        self.oracle = oracle
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def scoped(self, name: str) -> "ArtifactWriter":
        return ArtifactWriter(self.root / name, self.oracle)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self.path(name)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        logger.info("wrote %s", path)
        return path

    def write_metrics(self, rounds: List[RoundMetrics], name: str = METRICS_FILE) -> Path:
        return self.write_csv(name, METRICS_HEADER, (m.csv_row() for m in rounds))

    def episode_sink(self, curriculum: Curriculum, name: str = EPISODES_FILE):
        path = self.path(name)
        path.write_text("", encoding="utf-8")

        def sink(ep: EpisodeRecord) -> None:
            detected = detect_achieved(ep.frames(), curriculum, self.oracle)
            append_entries(path, [entry_from_episode(ep, detected)])

        return sink

    def save_checkpoint(self, params: PolicyParams, name: str = POLICY_FILE) -> Path:
        return save_params(params, self.path(name))

    def write_json(self, name: str, payload: Union[BaseModel, Any], indent: Optional[int] = 2) -> Path:
        path = self.path(name)
        if isinstance(payload, BaseModel):
            text = payload.model_dump_json(indent=indent)
        else:
            text = json.dumps(payload, indent=indent, sort_keys=True)
        path.write_text(text + "\n", encoding="utf-8")
        logger.info("wrote %s", path)
        return path
