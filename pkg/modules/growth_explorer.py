# modules/growth_explorer.py
import streamlit as st

from modules.common import group_picker, run_and_show


def main():
    st.header("📈 Growth Explorer")
    st.write("Ball sizes in the word metric, the doubling constant and the fitted growth degree.")

    col1, col2 = st.columns([2, 1])
    with col1:
        group = group_picker("growth")
    with col2:
        r_max = st.number_input("Largest radius", 2, 64, 12, key="growth_rmax")

    if st.button("Compute growth", key="growth_run"):
        report = run_and_show({"task": "growth", "group": group, "radii": [int(r_max)]})
        if report:
            st.metric("D", f"{report['D']:.4f}")
            st.metric("Growth degree", f"{report['growth_degree']:.3f}")
            if not report["flags"]["uniform_doubling"]:
                st.warning("Doubling ratios keep increasing: this group is not doubling at these scales.")

    st.divider()
    st.subheader("Separated covers")
    col1, col2, col3 = st.columns(3)
    with col1:
        cover_group = group_picker("cover")
    with col2:
        radius = st.number_input("R", 3, 48, 12, key="cover_R")
    with col3:
        epsilon = st.selectbox("ε", ["1/4", "1/3", "1/8"], key="cover_eps")
    if st.button("Build cover", key="cover_run"):
        run_and_show({"task": "cover", "group": cover_group, "radii": [int(radius)], "epsilon": epsilon})
