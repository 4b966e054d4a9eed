"""
Command-line interface: `python -m shapeweb_solver <command> [options]`.

Commands:
---------
web       Extract a leaf of the inertia-eigenvalue web (OBJ + CSV)
classify  Catalog relative equilibria (CSV + JSON)
stability Signature table along a family (CSV + thresholds JSON)
verify    Run the property suite; nonzero exit on any failure

Exit codes are 0 on success, 1 on configuration or numerical errors and 2
when the requested leaf is empty.
"""
import os
import sys
import json
import logging
import argparse
import numpy as np
import pandas as pd
from shapeweb_solver.errors import ShapeWebError, EmptyLeaf, ConfigError
from shapeweb_solver.config import (RunConfig, load_config, merge_config, apply_threads,
                                    EFFECTIVE_CONFIG)
from shapeweb_solver.models import RiemannEllipsoid, Sphere2Body, Spherical3Body
from shapeweb_solver.web_engine import (LeafSpec, extract_leaf, component_count,
                                        ellipsoid_web_samples)
from shapeweb_solver import re_solver
from shapeweb_solver.stability import signature_scan, thresholds

logger = logging.getLogger(__name__)

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)

def _float_list(text):
    return [float(v) for v in text.split(',')]

def build_parser():
    parser = _Parser(prog='shapeweb_solver',
                     description='Inertia-eigenvalue webs, relative equilibria and their stability')
    common = _Parser(add_help=False)
    common.add_argument('--config', help='JSON configuration file')
    common.add_argument('--model', help='Model identifier')
    common.add_argument('--potential', help='Pair or radial potential')
    common.add_argument('--m', type=_float_list, help='Comma separated masses')
    common.add_argument('--I', type=_float_list, help='Comma separated principal moments')
    common.add_argument('--rho', type=_float_list, help='Comma separated orbit radii')
    common.add_argument('--r-body', type=float, dest='r_body', help='Excluded body radius')
    common.add_argument('--res', '--resolution', type=int, dest='resolution',
                        help='Grid points per axis')
    common.add_argument('--tau-mult', type=float, dest='tau_mult')
    common.add_argument('--tau-zero', type=float, dest='tau_zero')
    common.add_argument('--tau-bd', type=float, dest='tau_bd')
    common.add_argument('-o', '--output', help='Output directory')
    common.add_argument('--seed', type=int)
    common.add_argument('--threads', type=int)
    common.add_argument('-v', '--verbose', action='count', default=None)
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True
    web = sub.add_parser('web', parents=[common], help='Extract a web leaf')
    web.add_argument('--lambda', type=float, dest='level', help='Leaf level')
    classify = sub.add_parser('classify', parents=[common], help='Catalog relative equilibria')
    classify.add_argument('--lambda', type=float, dest='level',
                          help='Leaf level for leaf searches')
    stability = sub.add_parser('stability', parents=[common], help='Signature table')
    stability.add_argument('--family', help='euler, lagrange or planar-iii')
    stability.add_argument('--n', type=int, help='Number of scan points')
    stability.add_argument('--Lsq-range', type=_float_list, dest='lsq_range',
                           help='Comma separated squared momentum range')
    sub.add_parser('verify', parents=[common], help='Run the property suite')
    return parser

def _model_params(model_id, args):
    params = {}
    if args.potential is not None:
        params['potential'] = args.potential
    if args.m is not None:
        if model_id == 's2body':
            params.update(zip(('m1', 'm2'), args.m))
        elif model_id == 'triatomic':
            params.update(zip(('m1', 'm2', 'm3'), args.m))
        else:
            raise ConfigError('--m does not apply to model `{0}`'.format(model_id))
    if args.I is not None:
        params['I'] = tuple(args.I)
    if args.rho is not None:
        if len(args.rho) != 2:
            raise ConfigError('--rho needs two values')
        params['rho1'], params['rho2'] = args.rho
    if args.r_body is not None:
        params['r_body'] = args.r_body
    return params

def resolve_config(args):
    """
    Merge defaults, the --config file and command-line flags into a RunConfig.
    """
    base = load_config(args.config) if args.config else {}
    flags = {key: getattr(args, key, None) for key in
             ('model', 'level', 'resolution', 'family', 'n', 'lsq_range', 'tau_mult',
              'tau_zero', 'tau_bd', 'output', 'seed', 'threads', 'verbose')}
    flags['command'] = args.command
    model_id = flags['model'] or base.get('model', RunConfig.model)
    flags['params'] = _model_params(model_id, args)
    if flags['model'] is not None and flags['model'] != base.get('model', flags['model']):
        # A different model does not inherit the file's model parameters
        base = dict(base)
        base.pop('params', None)
    return RunConfig.from_dict(merge_config(base, flags))

def _write_header_csv(path, df, header_lines):
    with open(path, 'w') as f:
        for line in header_lines:
            f.write('# {0}\n'.format(line))
        df.to_csv(f, index=False, float_format='%.9g')

def cmd_web(config):
    model = config.build_model()
    if isinstance(model, RiemannEllipsoid):
        raise ConfigError('Ellipsoid webs are sampled by `classify --model ellipsoid`')
    spec = LeafSpec(model, config.level)
    mesh = extract_leaf(spec, config.bounds, config.resolution, config.tau_bd)
    n_components = component_count(mesh)
    mesh.to_obj(os.path.join(config.output, 'leaf.obj'))
    mesh.to_csv(os.path.join(config.output, 'leaf.csv'))
    print('components: {0}'.format(n_components))
    print('vertices: {0}'.format(mesh.n_vertices))
    return 0

def _leaf_catalog(model, config):
    catalog = re_solver.Catalog(model.model_id)
    if model.model_id == 'fullbody':
        spec = LeafSpec(model, config.level)
        found = re_solver.find_re_on_leaf(model, spec,
                                          re_solver.fullbody_axis_seeds(model, config.level),
                                          threads=config.threads)
        radius = np.sqrt(max(config.level - model.I[0], 0.))
        if radius > model.r_body:
            found += re_solver.great_circle_re(model, radius)
        catalog.families['Generic'] = re_solver.FamilyCurve(
            'Generic', 'grad V = kappa grad lam', (config.level, config.level), found)
    elif model.model_id == 'triatomic':
        for radius, found in re_solver.triatomic_bifurcation(model).items():
            catalog.families['Generic-eps={0:g}'.format(radius)] = re_solver.FamilyCurve(
                'Generic', 'grad V = kappa grad lam', (0., radius), found)
    else:
        raise ConfigError('classify does not support model `{0}`'.format(model.model_id))
    return catalog

def cmd_classify(config):
    model = config.build_model()
    if isinstance(model, RiemannEllipsoid):
        samples = ellipsoid_web_samples(model.rho1, model.rho2)
        samples.to_csv(os.path.join(config.output, 'ellipsoid_web.csv'), index=False,
                       float_format='%.9g')
        print('shapes: {0}'.format(len(samples)))
        return 0
    if isinstance(model, (Sphere2Body, Spherical3Body)):
        catalog = re_solver.classify_all(model, resolution=config.resolution)
    else:
        catalog = _leaf_catalog(model, config)
    catalog.to_csv(os.path.join(config.output, 'catalog.csv'))
    catalog.to_json(os.path.join(config.output, 'catalog.json'))
    for name, curve in catalog.families.items():
        print('{0}: {1}'.format(name, len(curve)))
    print('abnormal: {0}'.format(len(catalog.abnormal)))
    return 0

def cmd_stability(config):
    model = config.build_model()
    if not isinstance(model, Spherical3Body):
        raise ConfigError('Signature scans are defined for the spherical three-body model')
    scan = signature_scan(model, config.family, n=config.n, lsq_range=config.lsq_range,
                          threads=config.threads, verbose=config.verbose > 0,
                          tau_zero=config.tau_zero)
    found = thresholds()
    header = ['{0} = {1:.9g} ({2})'.format(th.name, th.value, th.equation) for th in found]
    _write_header_csv(os.path.join(config.output, 'signature_table.csv'), scan.table, header)
    scan.regimes().to_csv(os.path.join(config.output, 'regimes.csv'), index=False,
                          float_format='%.9g')
    with open(os.path.join(config.output, 'thresholds.json'), 'w') as f:
        json.dump({th.name: float('{0:.9g}'.format(th.value)) for th in found}, f, indent=2)
    print('regimes: {0}'.format(len(scan.regimes())))
    for value in scan.transitions:
        print('transition: {0:.9g}'.format(value))
    return 0

def cmd_verify(config):
    from shapeweb_solver.verify import run_all
    results = run_all(seed=config.seed)
    with pd.option_context('display.max_colwidth', 80, 'display.width', 160):
        print(results.to_string(index=False))
    return 0 if results['passed'].all() else 1

COMMANDS = {'web': cmd_web, 'classify': cmd_classify, 'stability': cmd_stability,
            'verify': cmd_verify}

def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
        apply_threads(config.threads)
    except ConfigError as err:
        sys.stderr.write('error: {0}\n'.format(err))
        return 1
    logging.basicConfig(level=LOG_LEVELS[min(config.verbose, 2)],
                        format='%(levelname)s %(name)s: %(message)s')
    os.makedirs(config.output, exist_ok=True)
    config.write(os.path.join(config.output, EFFECTIVE_CONFIG))
    try:
        return COMMANDS[config.command](config)
    except EmptyLeaf as err:
        sys.stderr.write('empty leaf: {0}\n'.format(err))
        return 2
    except ShapeWebError as err:
        sys.stderr.write('error: {0}\n'.format(err))
        return 1
