from setuptools import setup

setup(name='mpccert',
      version='0.1',
      description='complexity certification and benchmarking of embedded MPC solvers',
      license='MIT',
      packages=['mpccert'],
      install_requires=[
          'numpy',
          'scipy',
          'pandas',
          'h5py'
      ],
      extras_require={
          'test': ['hypothesis']
      },
      entry_points={
          'console_scripts': ['mpccert=mpccert.mpc_bench_cli:main']
      },
      zip_safe=False)
