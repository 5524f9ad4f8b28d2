#pragma once

#include "dwmarket/core.hpp"
#include "dwmarket/coordinator.hpp"
#include "dwmarket/devices.hpp"
#include "dwmarket/error.hpp"
#include "dwmarket/lp.hpp"
#include "dwmarket/master.hpp"
#include "dwmarket/oracle.hpp"
#include "dwmarket/report.hpp"
#include "dwmarket/scenario.hpp"
#include "dwmarket/supply.hpp"
#include "dwmarket/transport/aggregator.hpp"
#include "dwmarket/transport/inproc.hpp"
#include "dwmarket/transport/message.hpp"
#include "dwmarket/transport/network.hpp"
#include "dwmarket/transport/tcp.hpp"
