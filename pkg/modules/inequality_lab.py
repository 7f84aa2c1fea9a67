# modules/inequality_lab.py
import streamlit as st

from modules.common import group_picker, measure_picker, radii_input, run_and_show


def poincare_page():
    st.write("### Poincaré inequalities on random functions")
    group = group_picker("poincare", default="Z")
    measure = measure_picker("poincare")
    radii = radii_input("poincare")
    col1, col2 = st.columns(2)
    with col1:
        variants = st.multiselect("Variants", ["inf", "courteous", "smoothing"], ["inf"], key="poincare_variants")
        n_functions = st.number_input("Functions per radius", 1, 1000, 20, key="poincare_n")
    with col2:
        seed = st.number_input("Seed", 0, 2**31 - 1, 0, key="poincare_seed")
    if "courteous" in variants and measure["power"] < 2:
        st.info("The courteous variant needs a density floor on S²; use a lazy measure with power 2.")
    if st.button("Run Poincaré suite", key="poincare_run"):
        report = run_and_show({
            "task": "poincare", "group": group, "measure": measure, "radii": radii,
            "variants": variants, "n_functions": int(n_functions), "seed": int(seed),
        })
        if report:
            st.metric("Pass rate", f"{report['pass_rate']:.0%}")


def reverse_page():
    st.write("### Reverse Poincaré for harmonic functions")
    group = group_picker("reverse")
    measure = measure_picker("reverse")
    radii = radii_input("reverse")
    k = st.number_input("k", 0, 4, 2, key="reverse_k")
    functions = st.text_input("Functions (blank for a computed HF_k basis)", "1,x,y,x*y,x**2-y**2",
                              key="reverse_functions")
    if st.button("Run reverse Poincaré", key="reverse_run"):
        report = run_and_show({
            "task": "reverse-poincare", "group": group, "measure": measure, "radii": radii, "k": int(k),
            "functions": [f.strip() for f in functions.split(",") if f.strip()],
        })
        if report:
            st.metric("Pass rate", f"{report['pass_rate']:.0%}")
            st.json(report["result"]["decay_fits"])


def main():
    st.header("📐 Inequality Lab")
    tab1, tab2 = st.tabs(["Poincaré", "Reverse Poincaré"])
    with tab1:
        poincare_page()
    with tab2:
        reverse_page()
