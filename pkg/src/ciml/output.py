import sys
import json

# Verbosity level
verbosity = 1

# Indentation string in messages
INDENT_STR = " " * 2


def write_report(report, filename):
    """Writes a report dictionary as JSON.

    Floats are written with full precision, so reading the file back yields
    the identical values.

    Args:
        report: Dictionary with JSON-serializable content.
        filename: Name of the file to write.
    """
    printstatus("Writing report '{}'".format(filename), indentlevel=1)
    with open(filename, "w") as fp:
        json.dump(report, fp, indent=2, sort_keys=True)
        fp.write("\n")


def read_report(filename):
    """Reads a report written by write_report."""
    with open(filename, "r") as fp:
        return json.load(fp)


def append_record(record, filename):
    """Appends one record as a single JSON line.

    Args:
        record: Dictionary with JSON-serializable content.
        filename: Name of the record file.
    """
    with open(filename, "a") as fp:
        fp.write(json.dumps(record, sort_keys=True) + "\n")


def read_records(filename):
    """Returns the list of records stored in a JSON-lines file."""
    with open(filename, "r") as fp:
        return [ json.loads(line) for line in fp if line.strip() ]


def write_table(header, rows, filename):
    """Writes a fixed width text table.

    Args:
        header: Column names.
        rows: List of rows, each a list of strings or numbers.
        filename: Name of the file to write.
    """
    printstatus("Writing table '{}'".format(filename), indentlevel=1)
    cells = [ [ str(hh) for hh in header ] ]
    for row in rows:
        cells.append([ "{:.4f}".format(el) if isinstance(el, float) else str(el)
                       for el in row ])
    widths = [ max(len(cc[ii]) for cc in cells) for ii in range(len(header)) ]
    with open(filename, "w") as fp:
        for irow, row in enumerate(cells):
            fp.write(" ".join("{:>{}s}".format(cc, ww)
                              for cc, ww in zip(row, widths)) + "\n")
            if irow == 0:
                fp.write(" ".join("-" * ww for ww in widths) + "\n")


def write_config(parser, filename):
    """Writes a configparser object with all resolved settings.

    Args:
        parser: configparser.ConfigParser instance.
        filename: Name of the file to write.
    """
    printstatus("Writing resolved configuration '{}'".format(filename),
                indentlevel=1)
    with open(filename, "w") as fp:
        parser.write(fp)


def error(msg, exitcode=1):
    """Write error message and exit.

    Args:
        msg: Error message.
        exitcode: Exit code of the process.
    """
    print("Error: " + msg, file=sys.stderr)
    print("Exiting...", file=sys.stderr)
    sys.exit(exitcode)


def printstatus(msg, indentlevel=0):
    """Print a status message, provided verbosity level is > 0.

    Args:
        msg: Message to be printed.
        indentlevel: Indentation level for the message.
    """
    if verbosity > 0:
        print(INDENT_STR * indentlevel + msg)


def set_verbosity(verbosity_level):
    """Set the verbosity level for the printstatus command.

    Args:
        verbosity_level: New verbosity level.
    """
    global verbosity
    verbosity = verbosity_level


def printheader():
    """Print header."""
    printstatus("*** CIML ***")
