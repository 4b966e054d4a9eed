#!/usr/bin/env python

from setuptools import setup

setup(name='shapeweb-solver',
      version='0.1',
      description='Inertia-eigenvalue webs, relative equilibria and energy-momentum stability',
      packages=["shapeweb_solver"],
      install_requires=[
          'numpy',
          'pandas',
          'scipy',
          'numba'
      ],
      extras_require={
          'test': ['pytest']
      }
     )
