"""Template-based multi-view human performance capture.

Pipeline: detect-free synthetic scenes or externally supplied 2D landmark
detections and silhouette masks drive a staged per-frame solve (skeletal
pose with closed-form global translation, then embedded-graph surface
deformation), all with analytic gradients.
"""

__version__ = "0.1.0"

from .camera import Camera, ObservationSet, load_rig, save_rig
from .character import (EmbeddedGraph, RigidityProfile, Skeleton,
                        TemplateCharacter, TriMesh, build_character,
                        load_character, save_character)
from .deform import GraphDeformation, deform_landmarks, deform_vertices
from .errors import (CalibrationError, ConstructionError, DegenerateBlendError,
                     DegenerateGeometryError, InvalidInputError, LoadError,
                     PerfcapError)
from .kinematics import (PoseParams, dqs_node_transforms, node_skinning,
                         skinning_transforms, forward_kinematics,
                         landmark_positions)
from .solver import (SolverConfig, SolveResult, TrackingResult,
                     monocular_refine, solve_deform_frame, solve_pose_frame,
                     track_sequence)
