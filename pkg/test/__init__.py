from .test_qp_core import MpcQpCoreTest
from .test_condense import MpcCondenseTest
from .test_admm_baseline import MpcAdmmBaselineTest
from .test_cert import MpcCertTest
from .test_pca_region import MpcPcaRegionTest
from .test_quad_sim import MpcQuadSimTest
from .test_result_hdf5 import MpcHdf5ResultHandlerTest
from .test_bench_manager import MpcBenchManagerTest
