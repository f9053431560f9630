#!/usr/bin/env python3
"""
Metrics and Observability
Stage latencies, counters, runtime budgets and Prometheus-style export
"""

import logging
import threading
import time
from collections import defaultdict, deque
from datetime import datetime, timezone
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)

# p95 wall-time budgets per stage, in milliseconds
DEFAULT_BUDGETS_MS = {
    'kernel_constants_latency': 5_000,
    'graph_build_latency': 60_000,
    'eigensolver_latency': 120_000,
    'transport_latency': 120_000,
    'continuum_reference_latency': 120_000,
    'sweep_trial_latency': 600_000,
}


class MetricsCollector:
    def __init__(self, budgets: Optional[Dict[str, float]] = None):
        self.metrics = defaultdict(deque)   # metric_name -> deque of (timestamp, value)
        self.counters = defaultdict(int)
        self.gauges = defaultdict(float)
        self.histograms = defaultdict(list)
        self.budgets = dict(DEFAULT_BUDGETS_MS)
        self.budgets.update(budgets or {})
        self.max_data_points = 1000
        self._lock = threading.Lock()

    def configure_budgets(self, budgets: Optional[Dict[str, float]]):
        """Overlay configured budgets (runtime.budgets_ms) on the defaults"""
        with self._lock:
            self.budgets.update(budgets or {})

    def reset(self):
        with self._lock:
            self.metrics.clear()
            self.counters.clear()
            self.gauges.clear()
            self.histograms.clear()

    def record_latency(self, metric_name: str, latency_ms: float):
        """Record latency measurement"""
        with self._lock:
            self.metrics[metric_name].append((time.time(), latency_ms))
            if len(self.metrics[metric_name]) > self.max_data_points:
                self.metrics[metric_name].popleft()
            histogram = self.histograms[f"{metric_name}_histogram"]
            histogram.append(latency_ms)
            if len(histogram) > self.max_data_points:
                del histogram[:-self.max_data_points]

    def increment_counter(self, metric_name: str, value: int = 1):
        """Increment counter metric"""
        with self._lock:
            self.counters[metric_name] += value

    def set_gauge(self, metric_name: str, value: float):
        """Set gauge metric value"""
        with self._lock:
            self.gauges[metric_name] = value
            self.metrics[metric_name].append((time.time(), value))
            if len(self.metrics[metric_name]) > self.max_data_points:
                self.metrics[metric_name].popleft()

    def calculate_percentile(self, metric_name: str, percentile: float) -> float:
        """Calculate percentile for histogram metric"""
        with self._lock:
            values = sorted(self.histograms.get(f"{metric_name}_histogram", []))
        if not values:
            return 0.0
        index = int(len(values) * percentile / 100.0)
        return values[min(index, len(values) - 1)]

    def check_budget_violations(self) -> List[Dict]:
        """Stages whose p95 wall time exceeds their budget"""
        violations = []
        for stage, threshold in sorted(self.budgets.items()):
            current_p95 = self.calculate_percentile(stage, 95.0)
            if current_p95 > threshold:
                violations.append({
                    'budget': stage,
                    'current_value': current_p95,
                    'threshold': threshold,
                    'severity': 'high' if current_p95 > threshold * 2 else 'medium',
                })
        return violations

    def stage_summary(self) -> Dict[str, Dict]:
        """Count / p50 / p95 / max per recorded latency metric"""
        with self._lock:
            names = [key[:-len('_histogram')] for key in self.histograms]
            snapshot = {name: list(self.histograms[f"{name}_histogram"]) for name in names}
        summary = {}
        for name, values in sorted(snapshot.items()):
            if not values:
                continue
            summary[name] = {
                'count': len(values),
                'p50_ms': self.calculate_percentile(name, 50.0),
                'p95_ms': self.calculate_percentile(name, 95.0),
                'max_ms': max(values),
            }
        return summary

    def get_prometheus_metrics(self) -> str:
        """Export metrics in Prometheus format"""
        lines = []
        with self._lock:
            counters = dict(self.counters)
            gauges = dict(self.gauges)
            histogram_names = [name for name, values in self.histograms.items() if values]

        for metric_name, value in sorted(counters.items()):
            lines.append(f"# TYPE {metric_name} counter")
            lines.append(f"{metric_name} {value}")

        for metric_name, value in sorted(gauges.items()):
            lines.append(f"# TYPE {metric_name} gauge")
            lines.append(f"{metric_name} {value}")

        for metric_name in sorted(histogram_names):
            base_name = metric_name.replace('_histogram', '')
            lines.append(f"# TYPE {base_name} summary")
            for quantile in (50.0, 95.0, 99.0):
                value = self.calculate_percentile(base_name, quantile)
                lines.append(f"{base_name}{{quantile=\"{quantile / 100.0}\"}} {value}")

        return "\n".join(lines)

    def get_budget_dashboard(self) -> Dict:
        """Budget status per stage plus overall health"""
        dashboard = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'budgets': {},
            'overall_health': 'GREEN'
        }
        violations = self.check_budget_violations()
        for stage, threshold in sorted(self.budgets.items()):
            current_value = self.calculate_percentile(stage, 95.0)
            dashboard['budgets'][stage] = {
                'current_p95_ms': current_value,
                'threshold_ms': threshold,
                'status': 'BREACH' if current_value > threshold else 'OK',
            }
        if any(v['severity'] == 'high' for v in violations):
            dashboard['overall_health'] = 'RED'
        elif violations:
            dashboard['overall_health'] = 'YELLOW'
        dashboard['violations'] = violations
        return dashboard


# Global metrics collector
metrics = MetricsCollector()


class LatencyTimer:
    """Context manager recording stage wall time and success/error counters"""

    def __init__(self, metric_name: str, collector: Optional[MetricsCollector] = None):
        self.metric_name = metric_name
        self.collector = collector or metrics
        self.start_time = None
        self.elapsed_ms = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.start_time is not None:
            self.elapsed_ms = (time.perf_counter() - self.start_time) * 1000
            self.collector.record_latency(self.metric_name, self.elapsed_ms)
            if exc_type is None:
                self.collector.increment_counter(f"{self.metric_name}_success_total")
            else:
                self.collector.increment_counter(f"{self.metric_name}_error_total")
        return False
