"""
report_generator.py - Markdown and PDF rendering of evaluation reports

The JSON report is the source of truth; this module turns it into a
readable Markdown summary and, when WeasyPrint is installed, a PDF.
"""

import os
from datetime import datetime
from typing import Dict, Optional

from config import REPORT_CONFIG

# Check if WeasyPrint is available
try:
    from weasyprint import HTML
    WEASYPRINT_AVAILABLE = True
except (ImportError, OSError):
    WEASYPRINT_AVAILABLE = False

# Check if Markdown is available
try:
    import markdown
    MARKDOWN_AVAILABLE = True
except ImportError:
    MARKDOWN_AVAILABLE = False


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return 'n/a'
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


class ReportGenerator:
    """Renders evaluation reports; PDF output degrades to Markdown only."""

    def __init__(self, quiet: bool = False):
        self.css_styles = self._get_css_styles()
        self.quiet = quiet

        if not WEASYPRINT_AVAILABLE and not quiet:
            print("⚠ Warning: WeasyPrint not available. PDF reports will be skipped.")
            print("Install with: pip install weasyprint")

    def _get_css_styles(self) -> str:
        return f"""
        @page {{
            size: A4;
            margin: 2cm;
            @bottom-right {{
                content: "Page " counter(page);
                font-size: 9pt;
                color: #666;
            }}
        }}
        body {{
            font-family: '{REPORT_CONFIG['font_family']}', sans-serif;
            font-size: {REPORT_CONFIG['body_font_size']}pt;
            line-height: 1.5;
            color: #333;
        }}
        .document-title {{
            text-align: center;
            font-size: 20pt;
            font-weight: bold;
            border-bottom: 3px solid #3498db;
            padding-bottom: 8px;
        }}
        .document-date {{
            text-align: center;
            color: #7f8c8d;
            font-style: italic;
            margin-bottom: 30px;
        }}
        h2 {{
            font-size: 14pt;
            border-bottom: 1px solid #bdc3c7;
            margin-top: 24px;
        }}
        table {{
            width: 100%;
            border-collapse: collapse;
            margin-bottom: 16px;
        }}
        th, td {{
            border: 1px solid #ddd;
            padding: 6px;
            text-align: left;
        }}
        th {{
            background-color: #f2f2f2;
        }}
        """

    def render_markdown(self, report: Dict) -> str:
        """Markdown summary of a merged evaluation report."""
        lines = [f"# {REPORT_CONFIG['title']}", ""]

        grounding = report if 'overall_acc' in report else report.get('grounding')
        if grounding:
            lines += ["## Grounding accuracy", "",
                      f"Overall: **{_fmt(grounding['overall_acc'])}** over {grounding.get('total', 0)} instructions",
                      "", "| distractors | accuracy | instructions | drop vs 1 |", "|---|---|---|---|"]
            drops = grounding.get('drop_vs_1', {})
            for key, acc in grounding['by_distractors'].items():
                lines.append(f"| {key} | {_fmt(acc)} | {grounding.get('counts', {}).get(key, 0)} "
                             f"| {_fmt(drops.get(key)) if key != '1' else '-'} |")
            lines += ["", "## Error modes", "", "| mode | count |", "|---|---|"]
            lines += [f"| {mode} | {count} |" for mode, count in grounding['errors'].items()]
            lines.append("")

        metrics = report.get('metrics')
        if metrics:
            lines += ["## n-gram metrics", "", "| B-1 | B-2 | B-3 | B-4 | ROUGE-L | CIDEr |",
                      "|---|---|---|---|---|---|", self._metric_row(metrics), ""]

        study = report.get('perturbation')
        if study:
            lines += [f"## Perturbation study (mode \"{study['mode']}\")", "",
                      "| corpus | B-1 | B-2 | B-3 | B-4 | ROUGE-L | CIDEr | grounding |",
                      "|---|---|---|---|---|---|---|---|",
                      f"| original {self._metric_row(study['original'])[1:]} {_fmt(study['grounding_acc_original'])} |",
                      f"| perturbed {self._metric_row(study['perturbed'])[1:]} {_fmt(study['grounding_acc_perturbed'])} |",
                      ""]
        return "\n".join(lines) + "\n"

    @staticmethod
    def _metric_row(metrics: Dict) -> str:
        cells = [_fmt(b) for b in metrics['bleu']] + [_fmt(metrics['rouge_l']), _fmt(metrics['cider'], 2)]
        return "| " + " | ".join(cells) + " |"

    def _markdown_to_html(self, markdown_text: str) -> str:
        if not MARKDOWN_AVAILABLE:
            return f"<pre>{markdown_text}</pre>"
        return markdown.markdown(markdown_text, extensions=['extra'])

    def _create_html_document(self, title: str, content_html: str) -> str:
        current_date = datetime.now().strftime("%B %d, %Y at %I:%M %p")
        return f"""
        <!DOCTYPE html>
        <html lang="en">
        <head>
            <meta charset="UTF-8">
            <title>{title}</title>
            <style>{self.css_styles}</style>
        </head>
        <body>
            <div class="document-title">{title}</div>
            <div class="document-date">Generated on {current_date}</div>
            <div class="content">{content_html}</div>
        </body>
        </html>
        """

    def generate_pdf(self, markdown_text: str, output_path: str) -> bool:
        if not WEASYPRINT_AVAILABLE:
            print("❌ Cannot generate PDF: WeasyPrint not available")
            return False
        try:
            os.makedirs(os.path.dirname(output_path) or '.', exist_ok=True)
            html_document = self._create_html_document(REPORT_CONFIG['title'], self._markdown_to_html(markdown_text))
            HTML(string=html_document).write_pdf(output_path)
            if not self.quiet:
                print(f"✓ Report PDF generated: {output_path}")
            return True
        except Exception as e:
            print(f"❌ Error generating report PDF: {e}")
            return False

    def generate_all_documents(self, report: Dict, output_dir: str, pdf: bool = False) -> Dict[str, str]:
        """Write report.md (always) and report.pdf (on request, when possible)."""
        os.makedirs(output_dir, exist_ok=True)
        generated: Dict[str, Optional[str]] = {}
        markdown_text = self.render_markdown(report)

        md_path = os.path.join(output_dir, 'report.md')
        with open(md_path, 'w', encoding='utf-8') as f:
            f.write(markdown_text)
        generated['markdown'] = md_path

        if pdf:
            pdf_path = os.path.join(output_dir, 'report.pdf')
            if self.generate_pdf(markdown_text, pdf_path):
                generated['pdf'] = pdf_path
            else:
                print("⚠ Skipping PDF report")
        return generated
