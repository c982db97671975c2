# src/interacting_urns/table_config.py

from typing import Any, Dict, List, Mapping, Optional
from pydantic import BaseModel


class ColumnConfig(BaseModel):
    """One CSV column."""
    description: Optional[str] = None
    required: bool = True


class TableConfig(BaseModel):
    """CSV layout written by one subcommand."""
    subcommand: str
    description: Optional[str] = None
    columns: Dict[str, ColumnConfig]

    @property
    def header(self) -> List[str]:
        return list(self.columns)

    def row(self, values: Mapping[str, Any]) -> List[str]:
        """Cells in header order; missing optional columns are left blank."""
        unknown = set(values) - set(self.columns)
        if unknown:
            raise KeyError(f"{self.subcommand} has no columns {sorted(unknown)}")
        cells = []
        for name, column in self.columns.items():
            value = values.get(name)
            if value is None and column.required:
                raise KeyError(f"{self.subcommand} row is missing {name}")
            cells.append(format_cell(value))
        return cells


def format_cell(value: Any) -> str:
    """Locale-free text for a CSV cell; floats keep their shortest round-trip form."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


TABLES = {
    "analytic": TableConfig(
        subcommand="analytic",
        description="Closed forms at one p, one row per ell",
        columns={
            "p": ColumnConfig(),
            "lambda_minus": ColumnConfig(description="Smaller characteristic root"),
            "lambda_plus": ColumnConfig(description="Larger characteristic root"),
            "C_p": ColumnConfig(),
            "A_p": ColumnConfig(),
            "q0": ColumnConfig(description="Fixation probability from two empty urns"),
            "ell": ColumnConfig(),
            "q_ell": ColumnConfig(description="Fixation probability from C1(ell)"),
            "r_ell": ColumnConfig(
                description="Fixation probability from C2(ell); blank at p = 1/2",
                required=False,
            ),
        },
    ),
    "oracle": TableConfig(
        subcommand="oracle",
        description="Truncated-solve brackets, one row per ell",
        columns={
            "p": ColumnConfig(),
            "L": ColumnConfig(description="Truncation level"),
            "ell": ColumnConfig(),
            "q_lower": ColumnConfig(),
            "q_upper": ColumnConfig(),
            "r_lower": ColumnConfig(),
            "r_upper": ColumnConfig(),
        },
    ),
    "simulate": TableConfig(
        subcommand="simulate",
        description="One Monte Carlo fixation estimate",
        columns={
            "p": ColumnConfig(),
            "rho": ColumnConfig(description="Weight token as given"),
            "urns": ColumnConfig(),
            "colors": ColumnConfig(),
            "replicas": ColumnConfig(),
            "mode": ColumnConfig(),
            "lower": ColumnConfig(),
            "upper": ColumnConfig(),
            "point": ColumnConfig(),
            "stderr": ColumnConfig(),
            "fixated": ColumnConfig(),
            "escaped": ColumnConfig(),
            "unresolved": ColumnConfig(),
            "q_analytic": ColumnConfig(
                description="Closed form when one is known for these parameters",
                required=False,
            ),
        },
    ),
    "sweep-p": TableConfig(
        subcommand="sweep-p",
        description="Fixation probability against p under infinite weights",
        columns={
            "p": ColumnConfig(),
            "q0_analytic": ColumnConfig(),
            "mc_lower": ColumnConfig(),
            "mc_upper": ColumnConfig(),
            "stderr": ColumnConfig(),
        },
    ),
    "sweep-rho": TableConfig(
        subcommand="sweep-rho",
        description="Convergence in rho of the classical-weight fixation probability",
        columns={
            "rho": ColumnConfig(description="Weight token as given"),
            "estimate_lower": ColumnConfig(),
            "estimate_upper": ColumnConfig(),
            "stderr": ColumnConfig(),
            "deviation": ColumnConfig(description="|midpoint - q0(p)|"),
            "ai_draw_rate": ColumnConfig(description="Fixated runs containing an AI-draw"),
            "ai_draw_stderr": ColumnConfig(),
        },
    ),
    "nonconformist": TableConfig(
        subcommand="nonconformist",
        description="Law of the number of non-conformist urns",
        columns={
            "urns": ColumnConfig(),
            "p": ColumnConfig(),
            "mode": ColumnConfig(),
            "n": ColumnConfig(),
            "probability": ColumnConfig(),
        },
    ),
    "single-urn": TableConfig(
        subcommand="single-urn",
        description="Per-draw frequencies of one urn",
        columns={
            "time": ColumnConfig(),
            "black_freq": ColumnConfig(description="Share of replicas drawing color 0"),
            "balanced_freq": ColumnConfig(description="Share of replicas with equal counts"),
        },
    ),
}
