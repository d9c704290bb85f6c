from setuptools import setup, find_packages

with open('README.md', 'r', encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='hfmdp',
    version='0.1.0',
    description='Distributed LP planning for factored MDPs built from trees of interacting subsystems',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(include=['hfmdp', 'hfmdp.*']),
    package_data={
        'hfmdp.models': ['*.hmdp'],
        'hfmdp.schema': ['*.json'],
    },
    install_requires=[
        'numpy>=1.22',
        'networkx>=2.6',
        'jsonschema>=4.0',
        'dashing',
        'psutil',
    ],
    extras_require={
        'test': ['pytest>=7', 'scipy>=1.8'],
    },
    entry_points={
        'console_scripts': [
            'hfmdp=hfmdp.hfmdp:main',
        ],
    },
    python_requires='>=3.9',
    classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    keywords='mdp factored-mdp linear-programming planning decomposition multiagent',
)
