#!/usr/bin/env python3
"""
Dashboard API Server for the training lab
Serves run status and validation records from the run store
"""
from flask import Flask, jsonify, render_template_string
from flask_cors import CORS
import os
import sys
from pathlib import Path
from datetime import datetime
from dataclasses import asdict

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

# Import from src package
try:
    from src.run_store import RunStore
except ImportError:
    # Fallback if running from different directory
    sys.path.append(str(Path(__file__).parent.parent / 'src'))
    from run_store import RunStore

PAGE = """<!doctype html>
<html>
<head><title>Seq2seq lab runs</title>
<style>body{font-family:sans-serif;margin:2em}td,th{padding:.2em .8em;text-align:left}</style>
</head>
<body>
<h1>Runs</h1>
<table>
<tr><th>id</th><th>phase</th><th>preset</th><th>status</th><th>created</th><th>best</th></tr>
{% for run in runs %}
<tr><td><a href="/api/runs/{{ run.id }}/records">{{ run.id }}</a></td><td>{{ run.phase }}</td>
<td>{{ run.preset }}</td><td>{{ run.status }}</td><td>{{ run.created }}</td><td>{{ run.best }}</td></tr>
{% endfor %}
</table>
</body>
</html>"""


def _iso(timestamp):
    return datetime.fromtimestamp(timestamp).isoformat() if timestamp else None


def _run_summary(run):
    return {
        'id': run.id,
        'phase': run.phase,
        'preset': run.preset,
        'status': run.status,
        'created_at': _iso(run.created_at),
        'completed_at': _iso(run.completed_at),
        'checkpoint': run.checkpoint,
        'best_score': run.best_score,
    }


def create_app(store=None):
    app = Flask(__name__)
    CORS(app)
    db = store or RunStore()

    @app.route('/')
    def index():
        """Serve the run table"""
        runs = [{
            'id': run.id, 'phase': run.phase, 'preset': run.preset, 'status': run.status,
            'created': _iso(run.created_at),
            'best': '' if run.best_score is None else f"{run.best_score:.4f}",
        } for run in db.list_runs(limit=50)]
        return render_template_string(PAGE, runs=runs)

    @app.route('/api/status')
    def get_status():
        """Run counts by status"""
        counts = db.status_counts()
        return jsonify({
            'total_runs': sum(counts.values()),
            'queued': counts.get('queued', 0),
            'running': counts.get('running', 0),
            'completed': counts.get('completed', 0),
            'failed': counts.get('failed', 0),
            'interrupted': counts.get('interrupted', 0),
            'db_path': str(db.db_path),
        })

    @app.route('/api/runs')
    def get_runs():
        """Most recent runs"""
        return jsonify({'runs': [_run_summary(run) for run in db.list_runs(limit=50)]})

    @app.route('/api/runs/<run_id>')
    def get_run(run_id):
        """Full detail of one run"""
        run = db.get_run(run_id)
        if not run:
            return jsonify({'error': 'Run not found'}), 404
        detail = _run_summary(run)
        detail['config'] = run.config
        detail['error'] = run.error
        return jsonify(detail)

    @app.route('/api/runs/<run_id>/records')
    def get_records(run_id):
        """Validation records of one run, by iteration"""
        if not db.get_run(run_id):
            return jsonify({'error': 'Run not found'}), 404
        return jsonify({'records': [asdict(r) for r in db.records(run_id)]})

    return app


if __name__ == '__main__':
    port = int(os.getenv("SEQ2SEQ_LAB_PORT", "5555"))
    print("Starting training lab dashboard...")
    print(f"Dashboard available at: http://localhost:{port}")
    create_app().run(host='0.0.0.0', port=port, debug=False)
