"""INI-style configuration of a validation run."""
import configparser
import logging
import os
import re
from collections import OrderedDict, namedtuple

from .collector import COPY_MODELS, DEFAULT_COLLECTOR_PARAMS
from .core import HISTORY_DEPTH, PIPELINE_CAPACITY
from .harness import DEFAULT_FABRIC_PARAMS, FabricConfig, build_pipeline
from .harness import max_reports_per_flow
from .logapprox import MAX_FRAC_BITS
from .reporter import DEFAULT_REPORTER_PARAMS
from .traffic import DEFAULT_TRAFFIC_PARAMS, Distribution, TrafficSpec, gen_traffic
from .traffic import load_pcap_trace

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "DFA_SEED"

_FABRIC_KEYS = OrderedDict(
    loss="loss_rate",
    dta_loss="dta_loss_rate",
    reorder="reorder_window",
    latency="latency_ns",
    seed="seed",
)

DEFAULT_CONFIG = OrderedDict(
    reporter=OrderedDict(DEFAULT_REPORTER_PARAMS),
    translator=OrderedDict(history_depth=HISTORY_DEPTH),
    collector=OrderedDict(DEFAULT_COLLECTOR_PARAMS),
    fabric=OrderedDict(
        (key, DEFAULT_FABRIC_PARAMS[name]) for key, name in _FABRIC_KEYS.items()
    ),
    traffic=OrderedDict(DEFAULT_TRAFFIC_PARAMS, pcap=""),
)

_DISTRIBUTION_KEYS = (("traffic", "gap"), ("traffic", "size"))
_ACCEPTED_RANGES = OrderedDict(
    [
        (("reporter", "period_ns"), (0, None)),
        (("reporter", "pipelines"), (1, None)),
        (("reporter", "flow_capacity"), (1, PIPELINE_CAPACITY)),
        (("reporter", "f_bits"), (1, MAX_FRAC_BITS)),
        (("reporter", "digest_rate"), (0, None)),
        (("reporter", "idle_timeout_ns"), (0, None)),
        (("reporter", "reporter_id"), (0, 0xFFFF)),
        (("translator", "history_depth"), (1, 0xFF)),
        (("collector", "num_flows"), (0, None)),
        (("collector", "staging_latency_us"), (0, None)),
        (("collector", "staging_batch"), (1, None)),
    ]
)
_ACCEPTED_CHOICES = {("collector", "copy_model"): COPY_MODELS}
_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


class ConfigError(ValueError):
    """Invalid configuration, located by file, line, section and key."""

    def __init__(self, message, fn=None, lineno=None, section=None, key=None):
        self.fn = fn
        self.lineno = lineno
        self.section = section
        self.key = key
        where = []
        if fn is not None:
            where.append(str(fn))
        if lineno is not None:
            where.append("line {0}".format(lineno))
        if section is not None:
            where.append("[{0}]".format(section))
        if key is not None:
            where.append(key)
        prefix = ", ".join(where)
        super().__init__("{0}: {1}".format(prefix, message) if prefix else message)


class DfaConfig(
    namedtuple(
        "DfaConfig",
        ["reporter", "translator", "collector", "fabric", "traffic", "fn", "lines"],
    )
):
    """Parsed configuration, one OrderedDict per section.

    lines maps section names and (section, key) pairs to the line they were read
    from, and is empty when no file was given.
    """

    __slots__ = ()

    def __new__(cls, reporter, translator, collector, fabric, traffic, fn, lines=None):
        lines = {} if lines is None else lines
        return super().__new__(
            cls, reporter, translator, collector, fabric, traffic, fn, lines
        )

    def error(self, message, *keys):
        """ConfigError located at the first of keys present in the file.

        Each key is a (section, key) pair. When none was read from the file the
        error names the first one without a line number.
        """
        for section, key in keys:
            if (section, key) in self.lines:
                return ConfigError(
                    message, self.fn, self.lines[(section, key)], section, key
                )
        section, key = keys[0]
        return ConfigError(message, self.fn, None, section, key)

    def traffic_spec(self):
        t = self.traffic
        return TrafficSpec(
            num_flows=t["num_flows"],
            packets_per_flow=t["packets_per_flow"],
            gap=t["gap"],
            size=t["size"],
            tcp_fraction=t["tcp_fraction"],
            seed=t["seed"],
            start_jitter_ns=t["start_jitter_ns"],
        )

    def fabric_config(self):
        return FabricConfig(
            **{name: self.fabric[key] for key, name in _FABRIC_KEYS.items()}
        )

    def pipeline_kwargs(self):
        """Keyword arguments of harness.run_pipeline besides source and fabric."""
        kwargs = OrderedDict(self.reporter)
        kwargs["history_depth"] = self.translator["history_depth"]
        c = self.collector
        kwargs["collector_flows"] = c["num_flows"]
        kwargs["copy_model"] = c["copy_model"]
        kwargs["staging_latency_s"] = c["staging_latency_us"] * 1e-6
        kwargs["staging_batch"] = c["staging_batch"]
        kwargs["check_icrc"] = c["check_icrc"]
        return kwargs

    def load_trace(self):
        """Captured trace when [traffic] pcap is set, synthetic trace otherwise."""
        if self.traffic["pcap"]:
            return load_pcap_trace(self.traffic["pcap"])
        return gen_traffic(self.traffic_spec())

    def build_pipeline(self, trace=None):
        """Check the run against trace and return harness.build_pipeline output.

        Raises
        ------
        ConfigError
            When the history ring cannot hold every report of a flow, or the
            collector region is smaller than the flow IDs the Reporter emits

        """
        if trace is None:
            try:
                trace = self.load_trace()
            except (OSError, ValueError) as err:
                msg = "cannot load trace ({0})".format(err)
                raise self.error(msg, ("traffic", "pcap"))
        kwargs = self.pipeline_kwargs()
        worst = max_reports_per_flow(trace, kwargs["period_ns"])
        if worst > kwargs["history_depth"]:
            msg = "a flow may send {0} reports but the history ring holds {1} entries"
            raise self.error(
                msg.format(worst, kwargs["history_depth"]),
                ("reporter", "period_ns"),
                ("translator", "history_depth"),
            )
        capacity = min(kwargs["flow_capacity"], trace.num_flows)
        needed = kwargs["pipelines"] * capacity
        if kwargs["collector_flows"] and kwargs["collector_flows"] < needed:
            msg = "region of {0} flows but the Reporter can emit {1} flow IDs"
            raise self.error(
                msg.format(kwargs["collector_flows"], needed),
                ("collector", "num_flows"),
            )
        return build_pipeline(trace, self.fabric_config(), **kwargs)


def _key_lines(text):
    """Map (section, key) and section names to 1-based line numbers."""
    lines = {}
    section = None
    header = re.compile(r"^\s*\[([^\]]+)\]")
    option = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
    for lineno, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            section = m.group(1).strip()
            lines.setdefault(section, lineno)
            continue
        m = option.match(line)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), lineno)
    return lines


def _convert(value, default):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError("`{0}` is not a boolean".format(value))
    if isinstance(default, int):
        return int(value.strip().replace("_", ""))
    if isinstance(default, float):
        return float(value)
    return value.strip()


def _check_accepted(value, fn, lineno, section, key):
    where = (fn, lineno, section, key)
    choices = _ACCEPTED_CHOICES.get((section, key))
    if choices is not None and value not in choices:
        msg = "`{0}` but accepted values are {1}"
        raise ConfigError(msg.format(value, ", ".join(choices)), *where)
    if (section, key) in _ACCEPTED_RANGES:
        low, high = _ACCEPTED_RANGES[(section, key)]
        if high is None and value < low:
            raise ConfigError("{0} must be >= {1}".format(value, low), *where)
        if high is not None and not low <= value <= high:
            msg = "{0} but accepted values are {1}..{2}"
            raise ConfigError(msg.format(value, low, high), *where)


def _parse_text(text, fn):
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    try:
        parser.read_string(text, source=str(fn))
    except configparser.MissingSectionHeaderError as err:
        raise ConfigError("missing section header", fn, err.lineno)
    except configparser.DuplicateSectionError as err:
        raise ConfigError("duplicate section", fn, err.lineno, err.section)
    except configparser.DuplicateOptionError as err:
        raise ConfigError("duplicate key", fn, err.lineno, err.section, err.option)
    except configparser.ParsingError as err:
        lineno = err.errors[0][0] if err.errors else None
        raise ConfigError("unparsable line", fn, lineno)

    located = _key_lines(text)
    sections = OrderedDict(
        (name, OrderedDict(defaults)) for name, defaults in DEFAULT_CONFIG.items()
    )
    for section in parser.sections():
        if section not in sections:
            raise ConfigError("unknown section", fn, located.get(section), section)
        for key, raw in parser.items(section):
            lineno = located.get((section, key))
            defaults = DEFAULT_CONFIG[section]
            if key not in defaults:
                raise ConfigError("unknown key", fn, lineno, section, key)
            try:
                sections[section][key] = _convert(raw, defaults[key])
            except ValueError:
                msg = "cannot parse `{0}` as {1}"
                msg = msg.format(raw, type(defaults[key]).__name__)
                raise ConfigError(msg, fn, lineno, section, key)
            _check_accepted(sections[section][key], fn, lineno, section, key)
            if (section, key) in _DISTRIBUTION_KEYS:
                try:
                    Distribution.parse(sections[section][key])
                except ValueError as err:
                    raise ConfigError(str(err), fn, lineno, section, key)
    return sections, located


def _apply_seed_override(sections, environ):
    seed = environ.get(SEED_ENV_VAR)
    if seed is None:
        return
    try:
        seed = int(seed)
    except ValueError:
        msg = "environment variable {0} = `{1}` is not an integer"
        raise ConfigError(msg.format(SEED_ENV_VAR, seed))
    logger.info("%s overrides the traffic and fabric seeds with %d", SEED_ENV_VAR, seed)
    sections["traffic"]["seed"] = seed
    sections["fabric"]["seed"] = seed


def load_config(fn=None, environ=None):
    """Load a configuration file, falling back on documented defaults.

    Parameters
    ----------
    fn : str, optional
        Path of an INI-style file with sections [reporter], [translator],
        [collector], [fabric] and [traffic]. Default is to use the defaults only.

    environ : mapping, optional
        Environment consulted for DFA_SEED. Default is os.environ.

    Returns
    -------
    config : DfaConfig

    Raises
    ------
    ConfigError
        For unreadable files, unknown sections or keys, unparsable values and
        invalid traffic or fabric parameters

    """
    environ = os.environ if environ is None else environ
    if fn is None:
        sections = OrderedDict(
            (name, OrderedDict(defaults)) for name, defaults in DEFAULT_CONFIG.items()
        )
        located = {}
    else:
        try:
            with open(fn, "r") as fin:
                text = fin.read()
        except OSError as err:
            raise ConfigError("cannot read file ({0})".format(err.strerror), fn)
        sections, located = _parse_text(text, fn)
    _apply_seed_override(sections, environ)

    config = DfaConfig(fn=fn, lines=located, **sections)
    for section, build in (
        ("traffic", config.traffic_spec),
        ("fabric", config.fabric_config),
    ):
        try:
            build()
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err), fn, located.get(section), section)
    return config
