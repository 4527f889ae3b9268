from setuptools import setup, find_packages

setup(
    name='AVSE',
    version='1.0.0',
    description='Audio-visual speech enhancement with Lombard and non-Lombard training material',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    license='MIT',
    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    python_requires='>=3.9',
    install_requires=[
        # Common packages,
        'matplotlib',
        'numpy',
        'pandas>=1.5',
        'pyyaml',
        'scikit-learn',
        'scipy',
        'seaborn',

        # Audio
        'soundfile',

        # Machine Learning
        'torch',

        # ML Tools
        'lightning',
        'wandb',
    ],
    extras_require={
        'test': ['pytest', 'pystoi'],
    },
    entry_points={
        'console_scripts': ['avse=source.cli:main'],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Multimedia :: Sound/Audio :: Speech',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
    ],
)
