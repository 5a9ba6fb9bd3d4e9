from .records import (
    CalibRecord,
    CameraRecord,
    DetectionRecord,
    EnergyRecord,
    FitRecord,
    FrameRecord,
    GroundTruthRecord,
    PassRecord,
    PoseRecord,
    ScenarioSpec,
    TrackRecord,
)
