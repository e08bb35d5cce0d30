"""Network-flow anomaly detection with tree ensembles and exact Tree SHAP."""

__version__ = "0.1.0"
