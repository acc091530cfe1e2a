"""Power: comparison table of raw-transducer and capacitor-voltage sensing."""

from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import click
import pandas as pd

from kehsim.power import (
    CAPACITOR,
    TRANSDUCER,
    Scenario,
    ScenarioPower,
    evaluate_scenario,
    savings,
)
from kehsim.utils.config import ExperimentConfig
from kehsim.utils.io import write_table_csv

COLUMNS = ["quantity", "scenario", "value", "unit"]


def _scenario_rows(result: ScenarioPower) -> List[Dict]:
    name = result.scenario.name
    payload = result.scenario.payload_bytes
    rows = [
        ("sensing sampling share", result.breakdown.sampling, "uW"),
        ("sensing sleep floor", result.breakdown.sleep_floor, "uW"),
        ("sensing power", result.sensing_uw, "uW"),
        (f"tx energy ({payload} B)", result.tx_model.energy_uj, "uJ"),
        (f"tx duration ({payload} B)", result.tx_model.duration_ms, "ms"),
        (f"tx avg power ({payload} B)", result.tx_model.avg_power_mw, "mW"),
    ]
    if result.tx_used != result.tx_model:
        rows += [
            (f"tx measured energy ({payload} B)", result.tx_used.energy_uj, "uJ"),
            (f"tx measured duration ({payload} B)", result.tx_used.duration_ms, "ms"),
        ]
    rows.append(("system power", result.system_uw, "uW"))
    return [dict(zip(COLUMNS, (q, name, v, u))) for q, v, u in rows]


def power_rows(
    config: ExperimentConfig,
    rate: Optional[float] = None,
    payload: Optional[int] = None,
    sleep_uw: Optional[float] = None,
    period: Optional[float] = None,
) -> List[Dict]:
    """
    Rows of the comparison table.

    Always includes the 25 Hz raw-transducer and 0.2 Hz capacitor scenarios and
    the savings between them; ``rate`` or ``payload`` adds a custom scenario.
    """
    pc = config.power
    base = pc.sensing if sleep_uw is None else replace(pc.sensing, p_sleep=sleep_uw)
    period = pc.period if period is None else period

    def run(scenario: Scenario) -> ScenarioPower:
        return evaluate_scenario(
            replace(scenario, period=period), base, pc.profile, measured=pc.measured_tx
        )

    raw, cap = run(TRANSDUCER), run(CAPACITOR)
    rows = _scenario_rows(raw) + _scenario_rows(cap)
    pair = f"{CAPACITOR.name} vs {TRANSDUCER.name}"
    rows += [
        dict(zip(COLUMNS, ("sensing saving", pair, savings(raw.sensing_uw, cap.sensing_uw), "%"))),
        dict(
            zip(
                COLUMNS,
                ("tx saving", pair, savings(raw.tx_model.energy_uj, cap.tx_model.energy_uj), "%"),
            )
        ),
        dict(zip(COLUMNS, ("system saving", pair, savings(raw.system_uw, cap.system_uw), "%"))),
    ]
    if rate is not None or payload is not None:
        custom = Scenario(
            name="custom",
            n=CAPACITOR.n if rate is None else rate,
            payload_bytes=CAPACITOR.payload_bytes if payload is None else payload,
        )
        rows += _scenario_rows(run(custom))
    return rows


def run_power(
    config: ExperimentConfig,
    rate: Optional[float] = None,
    payload: Optional[int] = None,
    sleep_uw: Optional[float] = None,
    period: Optional[float] = None,
    fmt: str = "text",
    out_path: Optional[Path] = None,
) -> List[Dict]:
    """Print (or write) the power comparison table, values rounded to 2 decimals."""
    rows = power_rows(config, rate=rate, payload=payload, sleep_uw=sleep_uw, period=period)
    if out_path is not None:
        write_table_csv(out_path, rows, float_format="%.2f")
        click.echo(f"Power table saved to: {out_path}")
        return rows

    df = pd.DataFrame(rows, columns=COLUMNS)
    if fmt == "csv":
        click.echo(df.to_csv(index=False, float_format="%.2f", lineterminator="\n"), nl=False)
    else:
        click.echo("Power: Sensing and Transmission Budget")
        click.echo("=" * 50)
        click.echo(df.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    return rows
