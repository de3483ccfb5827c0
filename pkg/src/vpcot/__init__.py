"""Step-labeled chain-of-thought construction from visual-program execution.

The pipeline grows a program tree for each visual-task query, runs every
complete path in a sandbox, labels each block along three dimensions
(relevance, logic, attribute), and converts blocks into natural-language
reasoning steps. The same labels drive best-of-N reward-guided decoding.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    BlockTrace,
    CodeBlock,
    CoTStep,
    ProgramTree,
    ScorerVerdict,
    StepLabels,
    StepRecord,
    VarValue,
    VisualTask,
)
