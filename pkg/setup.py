try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup


def prepare_description():
    description = open('README.rst', 'rb').read().decode('utf-8')
    # class references work well in generated docs (render links to API docs)
    # but don't work at PyPi - therefore are removed
    description = description.replace(":class:", "")
    return description


setup(
    name='py-capmfg',
    version='1.0.0',
    packages=['capmfg', 'capmfg.memo'],
    test_suite='tests',
    license='Apache License 2.0',
    description=('Solver for a mean field game of spatially interacting firms accumulating capital '
                 '(HJB / McKean-Vlasov fixed point with exact Wasserstein diagnostics).'),
    long_description=prepare_description(),
    long_description_content_type="text/x-rst",
    platforms=['Any'],
    keywords='python mean-field-games hjb mckean-vlasov wasserstein',
    install_requires=[
        'numpy>=1.22',
        'scipy>=1.8',
        'POT>=0.8',
    ],
    extras_require={
        'ujson': ['ujson>=1.35'],
        'tests': ['hypothesis>=6'],
    },
    entry_points={
        'console_scripts': ['capmfg=capmfg.cli:main'],
    },
    classifiers=[
        'Topic :: Scientific/Engineering :: Mathematics',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3 :: Only',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Intended Audience :: Science/Research'
    ]
)
