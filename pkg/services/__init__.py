from .experiment_service import ExperimentService, InversionSetup

__all__ = ["ExperimentService", "InversionSetup"]
