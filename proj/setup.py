import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    """Builds the _spikewarp pybind11 module with the project's CMake."""

    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)

        pybind11_dir = subprocess.check_output(
            [sys.executable, "-m", "pybind11", "--cmakedir"], text=True
        ).strip()
        subprocess.check_call(
            [
                "cmake",
                str(source_dir),
                f"-Dpybind11_DIR={pybind11_dir}",
                f"-DPYTHON_EXECUTABLE={sys.executable}",
                "-DCMAKE_BUILD_TYPE=Release",
            ],
            cwd=build_dir,
        )
        subprocess.check_call(
            ["cmake", "--build", ".", "--target", "_spikewarp"], cwd=build_dir
        )

        built = sorted(build_dir.glob("_spikewarp*.so"))
        if not built:
            raise RuntimeError("cmake did not produce the _spikewarp extension")
        out = Path(self.get_ext_fullpath(ext.name)).resolve()
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(built[-1].read_bytes())
        # keep a copy next to the package source so editable installs resolve it
        in_tree = source_dir / "python" / "spikewarp" / built[-1].name
        in_tree.write_bytes(built[-1].read_bytes())


setup(
    ext_modules=[CMakeExtension("spikewarp._spikewarp")],
    cmdclass={"build_ext": CMakeBuild},
)
