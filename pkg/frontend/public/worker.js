// Echo worker for the sharedWorker technique: every ping from the page makes
// one round trip through the browser-process loop this worker lives on.
onconnect = (e) => {
  const port = e.ports[0];
  port.onmessage = () => port.postMessage(0);
};
