"""
Metrics collector for track fits
Tracks latency, iteration counts, convergence and final energy per track
"""

import json
import os
from collections import defaultdict
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np


class MetricsCollector:
    """
    Collect and aggregate fit metrics, grouped by a label (e.g. scenario name)
    """

    def __init__(self, metrics_file: Optional[str] = None):
        self.metrics_file = metrics_file
        self.metrics: Dict[str, List[Dict[str, Any]]] = defaultdict(list)
        if self.metrics_file:
            os.makedirs(os.path.dirname(self.metrics_file) or ".", exist_ok=True)
            self._load_metrics()

    def record_fit(
        self,
        label: str,
        latency_ms: float,
        converged: bool,
        iterations: int,
        energy: float,
        error: Optional[str] = None,
    ):
        """Record metrics for a single track fit"""
        self.metrics[label].append(
            {
                "timestamp": datetime.utcnow().isoformat(),
                "latency_ms": latency_ms,
                "converged": converged,
                "iterations": iterations,
                "energy": energy,
                "error": error,
            }
        )

    def get_stats(self, label: Optional[str] = None) -> Dict[str, Any]:
        """Get aggregated statistics"""
        if label:
            return self._compute_stats(label, self.metrics.get(label, []))

        all_stats = {}
        total: List[Dict[str, Any]] = []
        for name, metrics in self.metrics.items():
            all_stats[name] = self._compute_stats(name, metrics)
            total.extend(metrics)
        all_stats["_global"] = self._compute_stats("global", total)
        return all_stats

    def _compute_stats(self, name: str, metrics: List[Dict[str, Any]]) -> Dict[str, Any]:
        if not metrics:
            return {
                "label": name,
                "count": 0,
                "converged_rate": 0.0,
                "avg_latency_ms": 0.0,
                "avg_iterations": 0.0,
                "median_energy": None,
                "errors": 0,
            }
        energies = [m["energy"] for m in metrics if m["energy"] is not None]
        return {
            "label": name,
            "count": len(metrics),
            "converged_rate": sum(1 for m in metrics if m["converged"]) / len(metrics) * 100,
            "avg_latency_ms": float(np.mean([m["latency_ms"] for m in metrics])),
            "avg_iterations": float(np.mean([m["iterations"] for m in metrics])),
            "median_energy": float(np.median(energies)) if energies else None,
            "errors": sum(1 for m in metrics if m.get("error")),
        }

    def _load_metrics(self):
        if os.path.exists(self.metrics_file):
            try:
                with open(self.metrics_file, "r") as f:
                    self.metrics = defaultdict(list, json.load(f))
            except (json.JSONDecodeError, IOError):
                pass

    def save(self):
        if not self.metrics_file:
            return
        try:
            with open(self.metrics_file, "w") as f:
                json.dump(dict(self.metrics), f, indent=2)
        except IOError:
            pass

    def reset(self):
        self.metrics.clear()
        self.save()
