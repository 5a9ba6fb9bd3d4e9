from .settings import (
    AssociationSettings,
    EnergyConfig,
    EvalSettings,
    GridSettings,
    GroundPlaneSettings,
    LMSettings,
    ManifoldSettings,
    MotionSettings,
    PipelineConfig,
    RenderSettings,
    apply_overrides,
    load_config,
)
