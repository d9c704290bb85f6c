"""
Live terminal view of a planning run (`hfmdp plan --live`).

The dashboard is a round observer for run_planner: after every round it
redraws a chart of the root master objective, one gauge per agent showing
its policy bank size, and the latest trace events.
"""

import logging
from collections import deque
from typing import Deque, List, Optional

from dashing import HChart, HGauge, HSplit, Text, VSplit

from .model import SubsystemTree
from .utils import clear_console, resource_snapshot

logger = logging.getLogger(__name__)

EVENT_LINES = 8


class PlanDashboard:
    """Round observer that draws the planner state with dashing."""

    def __init__(self, tree: SubsystemTree, color: int = 2, max_bank: int = 64):
        self.color = color
        self.max_bank = max_bank
        self.objectives: List[float] = []
        self.events: Deque[str] = deque(maxlen=EVENT_LINES)

        self.objective_chart = HChart(title="Root master objective", color=color)
        self.bank_gauges = [HGauge(title=m.name, val=0, color=color) for m in tree.subsystems]
        self.memory_gauge = HGauge(title="RSS", val=0, color=color)
        self.event_text = Text(text="Waiting for the first round...", color=color)

        banks_col = VSplit(*self.bank_gauges, self.memory_gauge, title="Policy banks", border_color=color)
        chart_col = VSplit(self.objective_chart, title="Master", border_color=color)
        self.ui = VSplit(
            HSplit(chart_col, banks_col),
            VSplit(self.event_text, title="Events", border_color=color),
            title=f"hfmdp: {len(tree)} subsystems, discount {tree.discount:g}",
            border_color=color,
        )
        self._started = False

    def _chart_point(self, objective: float) -> float:
        """The chart plots 0-100; objectives are scaled to the range seen so far."""
        self.objectives.append(objective)
        low, high = min(self.objectives), max(self.objectives)
        if high - low <= 0:
            return 50.0
        return 100.0 * (objective - low) / (high - low)

    def __call__(self, round_number: int, agents, events: List[dict]) -> None:
        if not self._started:
            clear_console()
            self._started = True
        root = agents[0]
        if root.last_master is not None and any(e["event"] == "message_lp" and e["agent"] == root.name
                                                for e in events):
            objective = root.last_master.objective
            self.objective_chart.title = f"Round {round_number}: {objective:.6g}"
            self.objective_chart.append(self._chart_point(objective))
        for gauge, agent in zip(self.bank_gauges, agents):
            size = len(agent.local_bank)
            gauge.title = f"{agent.name}: {size} policies"
            gauge.value = min(100, int(100 * size / self.max_bank))
        rss = resource_snapshot()["rss_mb"]
        self.memory_gauge.title = f"RSS {rss:.1f} MB"
        self.memory_gauge.value = min(100, int(rss / 10))
        for e in events:
            self.events.append(self._describe(e))
        self.event_text.text = "\n".join(self.events)
        self.ui.display()

    @staticmethod
    def _describe(event: dict) -> str:
        line = f"r{event['round']} {event['agent']} {event['event']}"
        if event["event"] == "message_lp":
            line += f" {event['status']} obj={event['objective']:.6g}"
        elif event["event"] == "standalone":
            line += f" by {event['solved_by']} bank={event['local_bank']}"
        return line

    def close(self, message: Optional[str] = None) -> None:
        # show the cursor again
        print("\033[?25h")
        if message:
            print(message)
