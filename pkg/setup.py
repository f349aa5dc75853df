try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup


setup(
    name='fedcausal',
    version='0.1.0',
    description='Federated target average treatment effect estimation '
                'with a Twisted federation runtime',
    packages=['fedcausal', 'fedcausal.test', 'txfedcausal',
              'txfedcausal.test', 'txfedcausal.test.mocks'],
    package_data={'fedcausal': ['presets/*.json']},
    install_requires=['Twisted', 'treq', 'numpy', 'scipy', 'pandas'],
    extras_require={'test': ['mock']},
    entry_points={
        'console_scripts': ['fedcausal = txfedcausal.cli:run'],
    },
    classifiers=[
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Mathematics"
    ]
)
