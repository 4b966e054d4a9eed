import json
import numpy as np
import pytest
from shapeweb_solver.errors import ConfigError
from shapeweb_solver.models import Sphere2Body
from shapeweb_solver.config import RunConfig, load_config, merge_config, worker_count

def test_defaults_are_valid():
    config = RunConfig()
    assert config.model == 's3body'
    assert config.lsq_range == (10., 80.)
    assert config.to_dict()['lsq_range'] == [10., 80.]

def test_validation():
    with pytest.raises(ConfigError):
        RunConfig(resolution=8)
    with pytest.raises(ConfigError):
        RunConfig(command='plot')
    with pytest.raises(ConfigError):
        RunConfig(tau_zero=0.)
    with pytest.raises(ConfigError):
        RunConfig(lsq_range=(80., 10.))
    with pytest.raises(ConfigError):
        RunConfig(model='s2body', params={'m1': -1.})
    with pytest.raises(ConfigError):
        RunConfig(model='s3body', params={'stiffness': 2.})
    with pytest.raises(ConfigError):
        RunConfig(threads=0)

def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'resolutoin': 32})
    config = RunConfig.from_dict({'model': 's2body', 'params': {'m2': 2.},
                                  'lsq_range': [5., 6.]})
    assert config.lsq_range == (5., 6.)
    model = config.build_model()
    assert isinstance(model, Sphere2Body)
    assert model.m2 == 2.

def test_write_round_trip(tmp_path):
    config = RunConfig(command='stability', family='lagrange', n=40, threads=2)
    path = str(tmp_path / 'config.json')
    config.write(path)
    assert RunConfig.from_dict(load_config(path)) == config

def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'list.json'
    bad.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError):
        load_config(str(bad))

def test_merge_config():
    base = {'model': 's2body', 'params': {'m1': 1., 'm2': 2.}, 'n': 10}
    merged = merge_config(base, {'params': {'m2': 3.}, 'n': None, 'seed': 4})
    assert merged == {'model': 's2body', 'params': {'m1': 1., 'm2': 3.}, 'n': 10, 'seed': 4}
    assert base['params'] == {'m1': 1., 'm2': 2.}

def test_worker_count(monkeypatch):
    assert worker_count(3) == 3
    monkeypatch.setenv('WEB_THREADS', '5')
    assert worker_count() == 5
    monkeypatch.setenv('WEB_THREADS', 'many')
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.delenv('WEB_THREADS')
    assert worker_count() >= 1
    with pytest.raises(ConfigError):
        worker_count(0)

def test_sample_configs_load():
    for name in ('s3body_web', 'fullbody_classify', 'lagrange_scan', 'planar_scan',
                 'ellipsoid_webs'):
        config = RunConfig.from_dict(load_config('data/configs/{0}.json'.format(name)))
        assert config.output == 'out/{0}'.format(name)
        config.build_model()

def test_build_model_carries_tau_mult():
    model = RunConfig(tau_mult=1e-3).build_model()
    assert model.tau_mult == 1e-3
    assert model.get_chart('face').tau_mult == 1e-3
    x = np.array([0.1, 0., 0.])
    assert not RunConfig().build_model().frame(x).has_repeated()
    assert RunConfig(tau_mult=1.).build_model().frame(x).has_repeated()
