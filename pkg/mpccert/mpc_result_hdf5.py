import h5py
import json
import logging
import os
import numpy as np

from .mpc_cert import MpcPartition, MpcRegion
from .mpc_polyhedron import MpcPolyhedron
from .mpc_qp_core import MpcWorkingSet
from .mpc_quad_sim import SimLog

logger = logging.getLogger('mpc_app')

class MpcHdf5ResultHandler:
    '''
    HDF5 archive of a run: a 'meta_data' group with attributes, one group
    per simulation log under 'data' and the partition under 'partition'.
    '''

    @staticmethod
    def _ensure_directory(
        file_path: str
    ) -> None:

        result_dir = os.path.dirname(file_path)
        if result_dir and not os.path.isdir(result_dir):
            os.makedirs(result_dir)

    @staticmethod
    def write_meta_data_to_hdf5(
        file_path: str,
        document: dict
    ) -> None:

        logger.info(f'Write meta data into {file_path}')
        MpcHdf5ResultHandler._ensure_directory(file_path)

        with h5py.File(file_path, 'a') as h5file:

            group = h5file.require_group('meta_data')
            for key in list(group.attrs.keys()):
                del group.attrs[key]
            for key, value in document.items():
                if value is None:
                    value = ''
                elif isinstance(value, (list, tuple, dict)):
                    value = json.dumps(value)
                group.attrs[key] = value

    @staticmethod
    def read_meta_data_from_hdf5(
        file_path: str
    ) -> dict:

        logger.info(f'Read meta data from {file_path}')

        with h5py.File(file_path, 'r') as h5file:

            document = {}
            for key, value in h5file['meta_data'].attrs.items():
                document[key] = value.item() if isinstance(value, np.generic) else value

        return document

    @staticmethod
    def write_sim_log_into_hdf5(
        file_path: str,
        log: SimLog
    ) -> None:

        logger.info(f'Write simulation log {log.get_name()} into {file_path}')
        MpcHdf5ResultHandler._ensure_directory(file_path)

        with h5py.File(file_path, 'a') as h5file:

            data_group = h5file.require_group('data')
            if log.get_name() in data_group:
                del data_group[log.get_name()]

            group = data_group.create_group(log.get_name())
            group.attrs['rate'] = log.rate
            group.attrs['samples'] = log.get_no_samples()

            for variable in log.get_variables():
                logger.debug(f'Create dataset for variable {variable}')
                group.create_dataset(variable, data=log.get_data_for_variable(variable))

    @staticmethod
    def get_variable_data_from_hdf5(
        file_path: str,
        name: str,
        variable: str
    ) -> np.ndarray:

        logger.info(f'Read dataset from {file_path} for {name}/{variable}')

        with h5py.File(file_path, 'r') as h5file:
            try:
                array = h5file['data'][name][variable][:]
            except KeyError:
                raise KeyError(f'No variable {variable} for log {name} in {file_path}')

        logger.debug(f'Shape of dataset {np.shape(array)}')

        return array

    @staticmethod
    def read_sim_log_from_hdf5(
        file_path: str,
        name: str
    ) -> SimLog:

        with h5py.File(file_path, 'r') as h5file:

            group = h5file['data'][name]
            log = SimLog(name, int(group.attrs['samples']), float(group.attrs['rate']))
            for variable in log.get_variables():
                log.data[variable] = group[variable][:]

        return log

    @staticmethod
    def write_partition_into_hdf5(
        file_path: str,
        partition: MpcPartition
    ) -> None:
        '''
        Halfspaces of all regions are stacked; row_offsets[j]:row_offsets[j+1]
        selects region j. Working-set sequences are stored the same way.
        '''

        logger.info(f'Write partition with {len(partition)} regions into {file_path}')
        MpcHdf5ResultHandler._ensure_directory(file_path)

        regions = partition.regions
        dim = partition.theta_set.dim

        row_offsets = np.cumsum([0] + [len(region.poly) for region in regions])
        A = np.vstack([region.poly.A for region in regions]) if regions else np.zeros((0, dim))
        b = np.concatenate([region.poly.b for region in regions]) if regions else np.zeros(0)

        ws_flat, ws_sizes, sequence_offsets = [], [], [0]
        for region in regions:
            for ws in region.ws_sequence:
                ws_flat.extend(ws.to_list())
                ws_sizes.append(len(ws))
            sequence_offsets.append(len(ws_sizes))

        witnesses = np.full((len(regions), dim), np.nan)
        for j, region in enumerate(regions):
            if region.witness is not None:
                witnesses[j] = region.witness

        with h5py.File(file_path, 'a') as h5file:

            if 'partition' in h5file:
                del h5file['partition']

            group = h5file.create_group('partition')
            group.attrs['pqp_checksum'] = partition.pqp_checksum
            group.attrs['budget_exceeded'] = partition.budget_exceeded

            group.create_dataset('theta_A', data=partition.theta_set.A)
            group.create_dataset('theta_b', data=partition.theta_set.b)
            group.create_dataset('A', data=A)
            group.create_dataset('b', data=b)
            group.create_dataset('row_offsets', data=row_offsets)
            group.create_dataset('ws_indices', data=np.array(ws_flat, dtype=np.int64))
            group.create_dataset('ws_sizes', data=np.array(ws_sizes, dtype=np.int64))
            group.create_dataset('sequence_offsets', data=np.array(sequence_offsets, dtype=np.int64))
            group.create_dataset('iterations', data=np.array([region.iterations for region in regions], dtype=np.int64))
            group.create_dataset('witness', data=witnesses)
            group.create_dataset('status', data=[region.status for region in regions], dtype=h5py.string_dtype())
            group.create_dataset('path', data=[region.path for region in regions], dtype=h5py.string_dtype())

    @staticmethod
    def read_partition_from_hdf5(
        file_path: str
    ) -> MpcPartition:

        logger.info(f'Read partition from {file_path}')

        with h5py.File(file_path, 'r') as h5file:

            group = h5file['partition']
            A = group['A'][:]
            b = group['b'][:]
            row_offsets = group['row_offsets'][:]
            ws_indices = group['ws_indices'][:]
            ws_sizes = group['ws_sizes'][:]
            sequence_offsets = group['sequence_offsets'][:]
            iterations = group['iterations'][:]
            witnesses = group['witness'][:]
            status = [value.decode('utf-8') if isinstance(value, bytes) else value for value in group['status'][:]]
            path = [value.decode('utf-8') if isinstance(value, bytes) else value for value in group['path'][:]]
            theta_set = MpcPolyhedron(group['theta_A'][:], group['theta_b'][:])
            pqp_checksum = group.attrs['pqp_checksum']
            budget_exceeded = bool(group.attrs['budget_exceeded'])

        ws_starts = np.concatenate([[0], np.cumsum(ws_sizes)])
        regions = []

        for j in range(len(iterations)):

            sequence = []
            for s in range(sequence_offsets[j], sequence_offsets[j + 1]):
                sequence.append(MpcWorkingSet(ws_indices[ws_starts[s]:ws_starts[s + 1]]))

            witness = None if np.any(np.isnan(witnesses[j])) else witnesses[j]

            regions.append(MpcRegion(
                poly=MpcPolyhedron(A[row_offsets[j]:row_offsets[j + 1]], b[row_offsets[j]:row_offsets[j + 1]]),
                ws_sequence=sequence,
                iterations=int(iterations[j]),
                witness=witness,
                status=status[j],
                path=path[j],
                region_id=j
            ))

        return MpcPartition(regions, theta_set, str(pqp_checksum), budget_exceeded)
