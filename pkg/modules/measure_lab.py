# modules/measure_lab.py
import streamlit as st

from modules.common import group_picker, measure_picker, run_and_show


def main():
    st.header("🎲 Measure Lab")

    mode = st.radio("Tool", ["Courteousness", "Hitting measure"], horizontal=True, key="measure_tool")
    group = group_picker("measure", default="Z")
    measure = measure_picker("measure")

    if mode == "Courteousness":
        if st.button("Check measure", key="courteous_run"):
            run_and_show({"task": "courteous", "group": group, "measure": measure})
        return

    col1, col2 = st.columns(2)
    with col1:
        subgroup = st.text_input("Subgroup", "sublattice:basis=[[2]]", key="hitting_subgroup")
        hit_mode = st.selectbox("Mode", ["exact", "monte_carlo"], key="hitting_mode")
    with col2:
        n_samples = st.number_input("Walks", 1000, 1_000_000, 100_000, step=1000, key="hitting_n")
        seed = st.number_input("Seed", 0, 2**31 - 1, 0, key="hitting_seed")
    if st.button("Compute hitting measure", key="hitting_run"):
        report = run_and_show({
            "task": "hitting", "group": group, "measure": measure, "subgroup": subgroup,
            "mode": hit_mode, "n_samples": int(n_samples), "seed": int(seed),
        })
        if report:
            st.json(report["measure"])
