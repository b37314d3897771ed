"""Dense SQP and its convex QP subproblem solver."""
from .qp import QpResult, QpStatus, solve_qp
from .sqp import (FunctionNlp, HessianMode, IterationRecord, Nlp, SolveResult, SolveStatus,
                  SqpConfig, solve)

__all__ = ["QpResult", "QpStatus", "solve_qp", "FunctionNlp", "HessianMode", "Nlp",
           "SolveResult", "SolveStatus", "SqpConfig", "solve", "IterationRecord"]
