from candida_screen.controllers.cam_controller import CamController
from candida_screen.controllers.detector_controller import DetectorController
from candida_screen.controllers.eval_controller import EvalController
from candida_screen.controllers.synth_controller import SynthController
from candida_screen.controllers.tile_controller import TileController
from candida_screen.controllers.wsi_controller import WSIController

__all__ = [
    "CamController",
    "DetectorController",
    "EvalController",
    "SynthController",
    "TileController",
    "WSIController",
]
