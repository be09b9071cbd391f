import numpy as np
import pytest

from nanotorus.device import Device, DeviceConfig
from nanotorus.lattice import TorusGeometry, build_torus, contact_frame, place_leads
from nanotorus.leads import LeadParams

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_REPORT: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_REPORT):
        terminalreporter.write_line(ACCEPTANCE_REPORT[k])


def default_contact_lead(**changes) -> LeadParams:
    """Lead parameters with contact coordinates of the full-size torus.

    Small test rings sit far from physical proportions, so their own contact
    projection is meaningless; they borrow the default one.
    """
    geom = TorusGeometry()
    placement = place_leads(build_torus(geom), 180.0)
    return LeadParams(**changes).with_contacts(contact_frame(placement.contact_sites_left, geom))


def small_device(n_layers=6, b0=0.0, alpha=180.0, t_hop=None, eta=2e-4, **lead) -> Device:
    cfg = DeviceConfig(geometry=TorusGeometry(n_layers=n_layers),
                       lead=default_contact_lead(**lead), eta=eta)
    return Device(cfg, b0=b0, alpha=alpha, t_hop=t_hop)


@pytest.fixture(scope="session")
def default_sites():
    return build_torus(TorusGeometry())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
