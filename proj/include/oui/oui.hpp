#pragma once

#include "oui/config.hpp"
#include "oui/data.hpp"
#include "oui/errors.hpp"
#include "oui/matrix.hpp"
#include "oui/network.hpp"
#include "oui/observers.hpp"
#include "oui/oui_metric.hpp"
#include "oui/screening.hpp"
#include "oui/svg_plot.hpp"
#include "oui/trainer.hpp"
#include "oui/trajectory_io.hpp"
#include "oui/wd_controller.hpp"
