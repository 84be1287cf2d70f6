"""Query engine: SQL subset parser, cost-aware planner, tree-search executor."""

from .executor import Executor, QueryResult, like_match
from .planner import PlanNode, StatsBook, build_plan, plan_to_dict
from .query import Query, parse_query

__all__ = ["Executor", "QueryResult", "like_match", "PlanNode", "StatsBook",
           "build_plan", "plan_to_dict", "Query", "parse_query"]
