"""Application entry point: ``python -m adhoc_capacity`` runs the Kedro project."""
import sys
from pathlib import Path

from kedro.framework.project import configure_project
from kedro.framework.session import KedroSession


def main():
    package_name = Path(__file__).parent.name
    configure_project(package_name)
    with KedroSession.create(project_path=Path.cwd()) as session:
        session.run(pipeline_name=sys.argv[1] if len(sys.argv) > 1 else None)


if __name__ == "__main__":
    main()
