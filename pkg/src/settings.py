"""Load project configurations from .env files.
Provides easy access to paths and simulation defaults used in the project.
Meant to be used as an imported module.

If `settings.py` is run on its own, it will create the appropriate
directories.

For information about the rationale behind decouple and this module,
see https://pypi.org/project/python-decouple/

Note that decouple mentions that it will help to ensure that
the project has "only one configuration module to rule all your instances."
This is achieved by putting all the configuration into the `.env` file.
A laptop run and a cluster run of the same sweep differ only in their
`.env` (e.g. `THREADS`, `MAX_VERTICES`, `CACHE_DIR`), never in code.

"""

from pathlib import Path

from decouple import config as _config


def if_relative_make_abs(path):
    """If a relative path is given, make it absolute, assuming
    that it is relative to the project root directory (BASE_DIR)

    Example
    -------
    ```
    if_relative_make_abs(Path('_data'))
    # PosixPath('/home/jdoe/ust4d/_data')

    if_relative_make_abs(Path("/scratch/ust4d/_cache"))
    # PosixPath('/scratch/ust4d/_cache')
    ```
    """
    path = Path(path)
    if path.is_absolute():
        abs_path = path.resolve()
    else:
        abs_path = (d["BASE_DIR"] / path).resolve()
    return abs_path


d = {}

# Absolute path to root directory of the project
d["BASE_DIR"] = Path(__file__).absolute().parent.parent

# fmt: off
## Paths
d["DATA_DIR"] = if_relative_make_abs(_config('DATA_DIR', default=Path('_data'), cast=Path))
d["OUTPUT_DIR"] = if_relative_make_abs(_config('OUTPUT_DIR', default=Path('_output'), cast=Path))
d["CACHE_DIR"] = if_relative_make_abs(_config('CACHE_DIR', default=Path('_cache'), cast=Path))
d["CONFIG_DIR"] = if_relative_make_abs(_config('CONFIG_DIR', default=Path('configs'), cast=Path))

## Lattice and sampler defaults
d["DIMENSION"] = _config("DIMENSION", default=4, cast=int)
d["MAX_DIMENSION"] = _config("MAX_DIMENSION", default=8, cast=int)
d["INDEX_WIDTH"] = _config("INDEX_WIDTH", default=32, cast=int)
d["MAX_VERTICES"] = _config("MAX_VERTICES", default=2**26, cast=int)
d["SEED"] = _config("SEED", default=20240917, cast=int)
d["THREADS"] = _config("THREADS", default=1, cast=int)
d["LOG_LEVEL"] = _config("LOG_LEVEL", default="INFO")

## Monte Carlo horizons
d["ESCAPE_HORIZON"] = _config("ESCAPE_HORIZON", default=10**6, cast=int)
d["GREEN_TRIALS"] = _config("GREEN_TRIALS", default=4000, cast=int)
d["GREEN_HORIZON"] = _config("GREEN_HORIZON", default=20000, cast=int)
d["REJECTION_CUTOFF"] = _config("REJECTION_CUTOFF", default=10**5, cast=int)
d["EXACT_ESCAPE_MAX_CELLS"] = _config("EXACT_ESCAPE_MAX_CELLS", default=2**20, cast=int)

## Fitting
d["COLLINEARITY_THRESHOLD"] = _config("COLLINEARITY_THRESHOLD", default=1e3, cast=float)
# fmt: on


def config(*args, **kwargs):
    key = args[0]
    default = kwargs.get("default", None)
    cast = kwargs.get("cast", None)
    if key in d:
        var = d[key]
        if default is not None:
            raise ValueError(
                f"Default for {key} already exists. Check your settings.py file."
            )
        if cast is not None:
            # Allows for re-emphasizing the type of the variable
            # But does not allow for changing the type of the variable
            # if the variable is defined in the settings.py file
            if type(cast(var)) is not type(var):
                raise ValueError(
                    f"Type for {key} is already set. Check your settings.py file."
                )
    else:
        # If the variable is not defined in the settings.py file,
        # then fall back to using decouple normally.
        var = _config(*args, **kwargs)
    return var


def create_dirs():
    ## If they don't exist, create the _data, _output and _cache directories
    d["DATA_DIR"].mkdir(parents=True, exist_ok=True)
    d["OUTPUT_DIR"].mkdir(parents=True, exist_ok=True)
    d["CACHE_DIR"].mkdir(parents=True, exist_ok=True)


if __name__ == "__main__":
    create_dirs()
