from setuptools import setup, find_packages

setup(name='LabelForge', version='1.0.0', packages=find_packages(include=['LabelForge', 'LabelForge.*']),
      install_requires=['numpy', 'pandas', 'scipy', 'matplotlib'],
      entry_points={'console_scripts': ['labelforge=LabelForge.cli:main']})
