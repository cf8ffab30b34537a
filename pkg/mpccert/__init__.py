from .mpc_config import MpcConfig
from .mpc_errors import MpcError
from .mpc_qp_core import MpcDenseQP
from .mpc_qp_core import MpcSolverConfig
from .mpc_qp_core import MpcSolveStatus
from .mpc_qp_core import MpcSolveTrace
from .mpc_qp_core import MpcWorkingSet
from .mpc_qp_core import dual_active_set_solve
from .mpc_qp_core import brute_force_solve
from .mpc_qp_core import check_kkt
from .mpc_qp_core import cost_model
from .mpc_condense import MpcOcpSpec
from .mpc_condense import MpcParametricQP
from .mpc_condense import condense
from .mpc_condense import mpc_step
from .mpc_admm_baseline import MpcAdmmCache
from .mpc_admm_baseline import MpcAdmmStatus
from .mpc_admm_baseline import build_admm_cache
from .mpc_admm_baseline import admm_solve
from .mpc_polyhedron import MpcPolyhedron
from .mpc_cert import MpcPartition
from .mpc_cert import MpcRegion
from .mpc_cert import MpcMeasurementVector
from .mpc_cert import certify
from .mpc_cert import measure
from .mpc_cert import wcet
from .mpc_pca_region import MpcPcaBox
from .mpc_pca_region import StateLog
from .mpc_pca_region import build_pca_box
from .mpc_quad_sim import QuadParams
from .mpc_quad_sim import QuadState
from .mpc_quad_sim import SimLog
from .mpc_quad_sim import closed_loop
from .mpc_result_hdf5 import MpcHdf5ResultHandler
from .mpc_bench_manager import BenchConfig
from .mpc_bench_manager import MpcBenchManager
from .mpc_bench_manager import MpcRunReport
from .mpc_bench_manager import MpcRunStatus
