# modules/dimension_lab.py
import streamlit as st

from modules.common import group_picker, measure_picker, radii_input, run_and_show

TOOLS = {
    "Dimension of HF_k": "dim",
    "Polynomial degree test": "polytest",
    "Weight decomposition": "weights",
    "Determinant doubling": "scan",
    "Kernel of the cover averages": "kernel",
}


def main():
    st.header("🧮 Dimension Lab")
    st.write("Numerical bases of polynomial-growth harmonic functions and their structure.")

    tool = st.selectbox("Tool", list(TOOLS), key="dim_tool")
    task = TOOLS[tool]
    group = group_picker("dim")
    measure = measure_picker("dim")
    col1, col2, col3 = st.columns(3)
    with col1:
        k = st.number_input("k", 0, 4, 2, key="dim_k")
    with col2:
        epsilon = st.selectbox("ε", ["1/4", "1/8"], key="dim_eps")
    with col3:
        backend = st.selectbox("Backend", ["poly_ansatz", "variational"], key="dim_backend")
    default = {"scan": "2,4,8", "kernel": "24"}.get(task, "8,12,16")
    radii = radii_input("dim", default)

    if st.button("Run", key="dim_run"):
        report = run_and_show({
            "task": task, "group": group, "measure": measure, "k": int(k),
            "epsilon": epsilon, "backend": backend, "radii": radii,
        })
        if not report:
            return
        if task == "dim" and report.get("dimension") is not None:
            st.metric(f"dim HF_{int(k)}", report["dimension"])
            st.metric("Kleiner bound", report["kleiner_bound"])
        elif task == "weights":
            st.write(f"Flag dimensions: {report['chain_dims']}")
        elif task == "kernel":
            st.metric("Kernel dimension", report["kernel_dim"])
