#pragma once

#include "cats/bbr.hpp"
#include "cats/cats_socket.hpp"
#include "cats/conductor.hpp"
#include "cats/config.hpp"
#include "cats/errors.hpp"
#include "cats/experiment.hpp"
#include "cats/metrics.hpp"
#include "cats/net.hpp"
#include "cats/priority.hpp"
#include "cats/report_io.hpp"
#include "cats/rtt.hpp"
#include "cats/sim.hpp"
#include "cats/transport.hpp"
#include "cats/wire.hpp"
#include "cats/workload.hpp"
