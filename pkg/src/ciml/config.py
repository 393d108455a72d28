import configparser
import os
from ciml.common import ConfigError

__all__ = [ "parse_arguments", "format_arguments", "read_config",
            "apply_overrides", ]


def parse_arguments(arguments, configdict=None, section="config"):
    """Selects the declared items from a configuration dictionary and converts
    them to their python type.

    Args:
        arguments: Dict mapping names to (type, shape, optional, default).
        configdict: Dictionary with configuration strings or None.
        section: Name of the section (for error messages).

    Returns:
        Dictionary of all declared entries with values converted to their
        python type. Missing optional entries get their default value.
    """
    if configdict is None:
        configdict = {}
    unknown = set(configdict.keys()) - set(arguments.keys())
    if unknown:
        raise ConfigError("Unknown field(s) {} in section [{}]".format(
            ", ".join("'" + uu + "'" for uu in sorted(unknown)), section))
    init_args = {}
    for arg, spec in arguments.items():
        argtype, shape, optional, default = spec

        # If non-optional argument is missing, stop.
        argvalue = configdict.get(arg, None)
        if argvalue is None:
            if optional:
                init_args[arg] = default
                continue
            raise ConfigError("Mandatory field '{}' missing in section [{}]"
                              .format(arg, section))
        init_args[arg] = _convert(arg, argtype, shape, argvalue.strip())
    return init_args


def _convert(arg, argtype, shape, argvalue):
    if argtype in ("floatarray", "intarray", "stringarray"):
        conv = { "floatarray": float, "intarray": int,
                 "stringarray": str }[argtype]
        try:
            values = [ conv(el) for el in argvalue.replace(",", " ").split() ]
        except ValueError:
            raise ConfigError("Supplied string for '{}' not convertible to {}"
                              .format(arg, argtype))
        if shape is not None and len(values) != shape:
            raise ConfigError("Wrong number of elements supplied for '{}'"
                              .format(arg))
        return values

    elif argtype == "integer":
        try:
            return int(argvalue)
        except ValueError:
            raise ConfigError("Supplied string for '{}' not convertible to "
                              "integer".format(arg))

    elif argtype == "float":
        try:
            return float(argvalue)
        except ValueError:
            raise ConfigError("Supplied string for '{}' not convertible to "
                              "float".format(arg))

    elif argtype == "logical":
        argvalue = argvalue.lower()
        if argvalue in [ "true", "on", "yes" ]:
            return True
        elif argvalue in [ "false", "off", "no" ]:
            return False
        raise ConfigError("Invalid logical value '{}' for '{}'".format(
            argvalue, arg))

    elif argtype == "string":
        return argvalue

    raise ConfigError("Internal error: no valid argument type '{}'".format(
        argtype))


def format_arguments(arguments, values):
    """Converts python values back to configuration strings.

    Args:
        arguments: Argument table (see parse_arguments).
        values: Dictionary with python values.

    Returns:
        Dictionary of strings for all entries which are not None.
    """
    result = {}
    for arg, spec in arguments.items():
        value = values.get(arg)
        if value is None:
            continue
        if spec[0] in ("floatarray", "intarray", "stringarray"):
            result[arg] = " ".join(repr(vv) if isinstance(vv, float)
                                   else str(vv) for vv in value)
        elif spec[0] == "float":
            result[arg] = repr(float(value))
        elif spec[0] == "logical":
            result[arg] = "yes" if value else "no"
        else:
            result[arg] = str(value)
    return result


def read_config(filename):
    """Reads an INI configuration file.

    Args:
        filename: Name of the file.

    Returns:
        configparser.ConfigParser instance.
    """
    if not os.path.exists(filename):
        raise ConfigError("Config file '{}' not found".format(filename))
    parser = configparser.ConfigParser()
    try:
        parser.read(filename)
    except configparser.Error as exc:
        raise ConfigError("Can't parse '{}': {}".format(filename, exc))
    return parser


def apply_overrides(parser, overrides):
    """Overrides configuration values.

    Args:
        parser: configparser.ConfigParser instance (modified in place).
        overrides: Iterable of "section.key=value" strings.
    """
    for override in overrides:
        try:
            target, value = override.split("=", 1)
            section, key = target.strip().split(".", 1)
        except ValueError:
            raise ConfigError("Invalid override '{}', expected "
                              "section.key=value".format(override))
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key.strip(), value.strip())
