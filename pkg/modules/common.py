# modules/common.py
"""Widgets shared by the lab pages."""
import pandas as pd
import streamlit as st

from config import REPORT_DIR, logger
from utils.experiment import EXIT_CHECK_FAILED, EXIT_INCONCLUSIVE, EXIT_OK, ExperimentConfig, run_experiment
from utils.errors import ConfigError

GROUPS = ["Z", "Z^d:d=2", "Z^d:d=3", "heisenberg", "lamplighter"]


def group_picker(key: str, default: str = "Z^d:d=2") -> str:
    return st.selectbox("Group", GROUPS, index=GROUPS.index(default), key=f"{key}_group")


def measure_picker(key: str) -> dict:
    col1, col2, col3 = st.columns(3)
    with col1:
        family = st.selectbox("Step measure", ["srw", "uniform", "geometric"], key=f"{key}_family")
    with col2:
        power = st.number_input("Convolution power", 1, 4, 1, key=f"{key}_power")
    with col3:
        decay = st.number_input("Geometric decay c", 0.1, 5.0, 1.0, step=0.1, key=f"{key}_decay",
                                disabled=family != "geometric")
    return {"family": family, "power": int(power), "decay": float(decay)}


def radii_input(key: str, default: str = "4,8,16") -> list:
    text = st.text_input("Radii (comma-separated)", default, key=f"{key}_radii")
    try:
        return [int(r) for r in text.split(",") if r.strip()]
    except ValueError:
        st.warning("Radii must be integers")
        return []


def run_and_show(values: dict):
    """Build the config, run it and render status, flags, headline numbers and tables."""
    values = {"out": str(REPORT_DIR), "format": "csv", **values}
    try:
        config = ExperimentConfig.from_mapping(values)
    except ConfigError as e:
        st.error(f"Invalid configuration: {e}")
        return None
    with st.spinner(f"Running {config.task} on {config.group}..."):
        result = run_experiment(config)
    if result.error is not None:
        st.error(f"{result.error}: {result.reason}")
        logger.error(f"page run failed: {result.status_line()}")
        return None
    report = result.report
    if result.exit_code == EXIT_OK:
        st.success(f"Done. Report: {result.paths[0].name}")
    elif result.exit_code == EXIT_INCONCLUSIVE:
        st.warning(f"Inconclusive: {report['result'].get('estimate', {}).get('reason', '')}")
    elif result.exit_code == EXIT_CHECK_FAILED:
        st.error(f"Failed checks: {', '.join(report['failed_checks'])}")
    if report["flags"]:
        cols = st.columns(min(4, len(report["flags"])))
        for i, (name, ok) in enumerate(sorted(report["flags"].items())):
            label = name if name in report["gated_flags"] else f"{name} (info)"
            cols[i % len(cols)].metric(label, "pass" if ok else "fail")
    with st.expander("Constants"):
        st.json(report["constants"])
    for path in result.paths[1:]:
        st.write(f"**{path.stem.rsplit('_', 1)[-1]}**")
        st.dataframe(pd.read_csv(path), use_container_width=True)
    return report