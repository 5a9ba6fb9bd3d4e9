from .car_generator import CarParameters, CarShape, car_point_cloud, sample_car_parameters, training_grids
from .manifold import PhiEvaluation, ShapeEvaluator, ShapeManifold, reconstruction_rms, train
