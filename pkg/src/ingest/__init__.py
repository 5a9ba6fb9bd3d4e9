from .association import (
    Initialization,
    associate,
    filter_observations,
    initialize,
    reassociate,
    same_association,
    select_points,
)
from .track_io import Calibration, CameraPose, Detection, Frame, Track, load_track, save_track
