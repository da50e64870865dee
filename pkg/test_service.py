"""
Tests for the HTTP endpoints of the reconstruction service.
"""

import os

import pytest

from src.main import create_app


@pytest.fixture
def client(tmp_path):
    app = create_app(str(tmp_path / 'service'))
    app.config['TESTING'] = True
    return app.test_client()


SMALL = {
    'nx': 64, 'K': 4.0, 'kgrid_n': 16, 'modes': 16, 'radial_degree': 24,
    'boundary_nodes': 64, 'series_n': 8, 'kmax': 4.0, 'directions': 4,
}


class TestServiceEndpoints:
    def test_health(self, client):
        response = client.get('/api/health')
        assert response.status_code == 200
        assert response.get_json()['status'] == 'healthy'

    def test_unknown_endpoint(self, client):
        response = client.get('/api/nothing-here')
        assert response.status_code == 404
        assert response.get_json()['success'] is False

    def test_defaults(self, client):
        body = client.get('/api/config/defaults').get_json()
        assert body['config']['nx'] == 128
        assert body['phantom']['kind'] == 'gauss'

    def test_validate_reports_issues(self, client):
        body = client.post('/api/config/validate', json={'config': {'K': 8.0, 'k_half_width': 8.0}}).get_json()
        assert body['success'] is False
        assert body['results']['errors']
        assert len(body['config_hash']) == 64

    def test_validate_accepts_defaults(self, client):
        body = client.post('/api/config/validate', json={}).get_json()
        assert body['success'] is True

    def test_invalid_config_is_a_bad_request(self, client):
        response = client.post('/api/config/validate', json={'config': {'nx': 100}})
        assert response.status_code == 400
        body = response.get_json()
        assert body['error'] == 'ConfigValidationError'
        assert body['details']['errors']

    def test_non_object_body(self, client):
        response = client.post('/api/phantom', json=[1, 2])
        assert response.status_code == 400

    def test_phantom_summary(self, client):
        body = client.post('/api/phantom', json={
            'config': {'nx': 64},
            'phantom': {'amplitude': 0.2},
            'include_samples': True,
        }).get_json()
        assert body['max_abs_b1'] == pytest.approx(0.2)
        assert len(body['b1']) == 64
        assert body['phantom_id'].startswith('gauss-')

    def test_phantom_outside_support_is_rejected(self, client):
        response = client.post('/api/phantom', json={'phantom': {'support_radius': 0.95}})
        assert response.status_code == 400
        assert response.get_json()['error'] == 'SupportError'

    def test_volume_pipeline_run(self, client, tmp_path):
        response = client.post('/api/pipeline/run', json={
            'config': SMALL,
            'phantom': {'amplitude': 0.0},
            'volume_only': True,
        })
        assert response.status_code == 200
        report = response.get_json()['report']
        assert report['mode'] == 'volume'
        assert report['errors']['b1'] == 0.0
        assert os.path.exists(tmp_path / 'service' / 'report.json')

    def test_failing_stage_names_the_stage(self, client):
        response = client.post('/api/pipeline/run', json={
            'config': SMALL,
            'phantom': {'support_radius': 0.9},
            'volume_only': True,
        })
        assert response.status_code == 400
        body = response.get_json()
        assert body['error'] == 'PipelineStageError'
        assert body['details']['stage'] == 'validate'

    def test_requests_cannot_choose_the_output_directory(self, client, tmp_path):
        target = tmp_path / 'elsewhere'
        response = client.post('/api/pipeline/run', json={
            'config': dict(SMALL, output_dir=str(target)),
            'phantom': {'amplitude': 0.0},
            'volume_only': True,
        })
        assert response.status_code == 400
        assert response.get_json()['error'] == 'ConfigValidationError'
        assert not target.exists()
        assert not (tmp_path / 'service' / 'report.json').exists()

    def test_config_must_be_an_object(self, client):
        response = client.post('/api/config/validate', json={'config': [1, 2]})
        assert response.status_code == 400
