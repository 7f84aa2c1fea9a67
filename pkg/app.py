# app.py
import streamlit as st

from config import LAB_VERSION
from modules import dimension_lab, growth_explorer, inequality_lab, measure_lab, report_summary
from setup_logging import setup_logging

st.set_page_config(
    page_title="Harmonic Functions Lab",
    page_icon="🧮",
    layout="wide",
    initial_sidebar_state="expanded"
)

logger = setup_logging()

st.title("🧮 Harmonic Functions Lab")
st.caption(f"Polynomial-growth harmonic functions on finitely generated groups · v{LAB_VERSION}")

tab_names = ["Growth Explorer", "Measure Lab", "Inequality Lab", "Dimension Lab", "Report Summary"]

tabs = st.tabs(tab_names)

with tabs[0]:
    growth_explorer.main()

with tabs[1]:
    measure_lab.main()

with tabs[2]:
    inequality_lab.main()

with tabs[3]:
    dimension_lab.main()

with tabs[4]:
    report_summary.main()
