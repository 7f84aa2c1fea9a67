# modules/report_summary.py
import streamlit as st

from config import REPORT_DIR, logger
from utils.errors import SchemaMismatchError
from utils.reports import emit_summary, load_report


def main():
    st.header("🗂️ Report Summary")

    reports = sorted(REPORT_DIR.glob("*.json"))
    if not reports:
        st.info(f"No reports in {REPORT_DIR} yet. Run a task from another tab or `python cli.py`.")
        return

    chosen = st.multiselect("Reports", [p.name for p in reports], [p.name for p in reports], key="summary_reports")
    if chosen and st.button("Build summary", key="summary_run"):
        try:
            frame = emit_summary([REPORT_DIR / name for name in chosen])
        except SchemaMismatchError as e:
            st.error(f"Schema mismatch: {', '.join(e.offending)}")
            logger.error(f"summary failed: {e}")
            return
        st.dataframe(frame, use_container_width=True)
        st.download_button("Download CSV", frame.to_csv(index=False), "summary.csv", "text/csv")

    selected = st.selectbox("Inspect report", [p.name for p in reports], key="summary_inspect")
    if selected:
        st.json(load_report(REPORT_DIR / selected))
