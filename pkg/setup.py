#!/usr/bin/env python3
from setuptools import setup

setup(name="ciml",
      version="0.1",
      description="Common and unique multi-view representation learning",
      license="BSD",
      platforms="platform independent",
      package_dir={ "": "src"},
      packages=[ "ciml", ],
      scripts=[ "bin/ciml" ],
      python_requires=">=3.9",
      install_requires=[ "numpy", "torch>=2.0", "scikit-learn>=1.1" ],
      classifiers=[
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: BSD License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        ],
      long_description="""
Common and unique multi-view representation learning
----------------------------------------------------

Learns, from several feature sets (views) describing the same samples, a
compressed common representation shared by all views and one unique
representation per view, kept independent of the common part and of each
other. The joint representation feeds a classifier. Includes a synthetic
data generator with Bayes oracle, the multi-trial evaluation protocol,
ablation and sensitivity sweeps and post-hoc independence and sufficiency
checks.
""")
