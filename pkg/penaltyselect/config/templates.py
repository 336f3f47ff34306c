"""Markdown report templates for experiment summaries."""

from pathlib import Path
from typing import Any, Dict, Optional

from jinja2 import Template


class ReportTemplate:
    """A report template with Jinja2 support."""

    def __init__(self, name: str, template: str, description: str = ""):
        self.name = name
        self.template = Template(template, trim_blocks=True, lstrip_blocks=True)
        self.description = description

    def render(self, **kwargs) -> str:
        return self.template.render(**kwargs)


class ReportManager:
    """Registry of report templates."""

    def __init__(self):
        self._templates: Dict[str, ReportTemplate] = {}
        self._load_default_templates()

    def _load_default_templates(self):
        self.register_template(
            "ratio_report",
            """# {{ summary.kind }} (seed {{ summary.master_seed }})

Trials: {{ summary.completed }} of {{ summary.trials }} completed{% if summary.skipped %}, skipped: {{ summary.skipped | join(", ") }}{% endif %}

| statistic | greedy / optimum |
|-----------|------------------|
| mean | {{ "%.6f" | format(summary.mean_ratio) if summary.mean_ratio is not none else "n/a" }} |
| min | {{ "%.6f" | format(summary.min_ratio) if summary.min_ratio is not none else "n/a" }} |
| max | {{ "%.6f" | format(summary.max_ratio) if summary.max_ratio is not none else "n/a" }} |

Certificate pass rate: {{ "%.3f" | format(summary.cert_pass_rate) if summary.cert_pass_rate is not none else "no certificates" }}
{% if summary.gamma_means %}

## Mean ratio by gamma target
{% for problem, means in summary.gamma_means.items() %}

### {{ problem }}
| gamma target | mean ratio |
|--------------|------------|
{% for target, mean in means.items() %}
| {{ target }} | {{ "%.6f" | format(mean) }} |
{% endfor %}
{% endfor %}
{% endif %}
{% if summary.counterexamples %}

## Certificate counterexamples
| trial | seed | problem | gamma | bound | greedy | optimum |
|-------|------|---------|-------|-------|--------|---------|
{% for c in summary.counterexamples %}
| {{ c.trial }} | {{ c.seed }} | {{ c.problem }} | {{ "%.4g" | format(c.gamma) }} | {{ "%.6g" | format(c.bound) if c.bound is not none else "-" }} | {{ "%.6g" | format(c.greedy_value) }} | {{ "%.6g" | format(c.opt_value) }} |
{% endfor %}
{% endif %}
""",
            "Greedy-versus-optimum ratio experiments",
        )

        self.register_template(
            "convergence_report",
            """# {{ summary.kind }} (seed {{ summary.master_seed }})

Samples: {{ summary.convergence.horizon }}
Equivalence class size: {{ summary.convergence.class_size }}

Final beliefs inside the class: {{ summary.convergence.final_in_class | map("round", 6) | join(", ") }}
Largest final belief outside the class: {{ "%.3e" | format(summary.convergence.final_out_of_class_max) }}
Largest in-class belief gap over the run: {{ "%.3e" | format(summary.convergence.max_in_class_gap) }}
""",
            "Belief convergence demo",
        )

    def register_template(self, name: str, template: str, description: str = ""):
        self._templates[name] = ReportTemplate(name, template, description)

    def get_template(self, name: str) -> Optional[ReportTemplate]:
        return self._templates.get(name)

    def render_report(self, template_name: str, **kwargs) -> str:
        template = self.get_template(template_name)
        if not template:
            raise ValueError(f"Template '{template_name}' not found")
        return template.render(**kwargs)

    def list_templates(self) -> Dict[str, str]:
        return {name: template.description for name, template in self._templates.items()}

    def load_template_from_file(self, name: str, file_path: Path, description: str = ""):
        if not file_path.exists():
            raise FileNotFoundError(f"Template file not found: {file_path}")
        self.register_template(name, file_path.read_text(encoding="utf-8"), description)


_report_manager: Optional[ReportManager] = None


def get_report_manager() -> ReportManager:
    """Get the global report manager instance."""
    global _report_manager
    if _report_manager is None:
        _report_manager = ReportManager()
    return _report_manager


def render_experiment_report(summary: Any) -> str:
    """Markdown report for an experiment summary."""
    name = "convergence_report" if summary.convergence is not None else "ratio_report"
    return get_report_manager().render_report(name, summary=summary)
